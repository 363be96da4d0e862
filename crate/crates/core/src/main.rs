use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use substation_testbed::attacker::{self, StreamKind};
use substation_testbed::bus::{CaptureRecord, SimTime};
use substation_testbed::capture::{self, PcapPacket};
use substation_testbed::codec::{self, Frame, UtcTimestamp};
use substation_testbed::events::{self, LogEvent};
use substation_testbed::scenario::{self, OutputOptions, RunReport, Scenario};
use substation_testbed::timing::{self, ChainOrigin, TimingSection};

#[derive(Parser)]
#[command(
    name = "testbed",
    version,
    about = "Virtual substation process-bus testbed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios (built-in names, files, or `all`).
    Run(RunArgs),
    /// List built-in scenarios.
    List,
    /// Dump the frames of a pcap file or a hex string.
    Decode { input: String },
    /// Decompose trip latency from an events.jsonl log.
    Analyze {
        log: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        deploy_ns: u64,
    },
    /// Craft attack frames offline from a recorded capture.
    #[command(subcommand)]
    Attack(AttackCmd),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "scenario", required = true, num_args = 1..)]
    scenarios: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "testbed-out")]
    out: PathBuf,
    #[arg(long)]
    pcap: bool,
    #[arg(long)]
    report: bool,
    /// Scenarios run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Stream profiles learned from the capture.
    Profiles { capture: PathBuf },
    /// Re-emit frame `index` of the capture unchanged.
    Replay {
        capture: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        /// Delay after the last captured frame.
        #[arg(long, default_value_t = 1_000_000)]
        after_ns: u64,
    },
    /// Forge the next state of a GOOSE stream.
    Spoof {
        capture: PathBuf,
        #[arg(long)]
        go_id: String,
        /// Comma separated booleans, e.g. `true` or `true,false`.
        #[arg(long, value_delimiter = ',', default_value = "true")]
        data: Vec<bool>,
        /// Reuse the observed stNum/sqNum/t instead of opening a new state.
        #[arg(long)]
        stale: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        after_ns: u64,
    },
    /// Synthesize an SV false-data stream continuing the observed counter.
    Fdi {
        capture: PathBuf,
        #[arg(long, default_value = "MU01")]
        sv_id: String,
        #[arg(long, default_value_t = 20_000.0)]
        peak: f64,
        #[arg(long, default_value_t = 80)]
        count: usize,
        #[arg(long, default_value_t = 250_000)]
        inter_packet_ns: u64,
        #[arg(long, default_value_t = 60.0)]
        frequency: f64,
        #[arg(long, default_value_t = 4800.0)]
        sampling_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::List => cmd_list(),
        Command::Decode { input } => cmd_decode(&input),
        Command::Analyze { log, deploy_ns } => cmd_analyze(&log, deploy_ns),
        Command::Attack(a) => cmd_attack(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_list() -> Result<ExitCode> {
    for s in scenario::builtins() {
        println!("{:<18} {}", s.name, s.description);
    }
    Ok(ExitCode::SUCCESS)
}

fn summary_line(r: &RunReport) -> String {
    let tp = r
        .timing
        .primary
        .as_ref()
        .map(|t| format!("{:.3} ms", t.t_p_ns as f64 / 1e6))
        .unwrap_or_else(|| "-".into());
    format!(
        "{:<18} {}  T_p {}  alerts {}  missed {:?}  capture {}",
        r.scenario.name,
        if r.passed { "PASS" } else { "FAIL" },
        tp,
        r.detection.total_alerts,
        r.detection.missed_attacks,
        &r.capture.pcap_sha256[..16],
    )
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut scenarios: Vec<Scenario> = Vec::new();
    for spec in &args.scenarios {
        if spec == "all" {
            scenarios.extend(scenario::builtins());
        } else {
            scenarios.push(scenario::resolve(spec).with_context(|| format!("scenario {spec}"))?);
        }
    }
    if let Some(seed) = args.seed {
        for s in &mut scenarios {
            s.seed = seed;
        }
    }
    let jobs = args.jobs.max(1).min(scenarios.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport>>>> =
        Mutex::new((0..scenarios.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(s) = scenarios.get(i) else { break };
                let r = run_one(s, &args);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let mut all_passed = true;
    for r in results.into_inner().expect("results lock") {
        let report = r.expect("every scenario ran")?;
        println!("{}", summary_line(&report));
        for e in report.expectations.iter().filter(|e| !e.passed) {
            println!("    {}: {}", e.name, e.detail);
        }
        all_passed &= report.passed;
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run_one(s: &Scenario, args: &RunArgs) -> Result<RunReport> {
    let outcome = scenario::run(s).with_context(|| format!("running {}", s.name))?;
    let options = OutputOptions {
        pcap: args.pcap || s.output.pcap,
        report: args.report || s.output.report,
    };
    let dir = args.out.join(&s.name);
    scenario::write_artifacts(&outcome, &dir, options)
        .with_context(|| format!("writing artifacts to {}", dir.display()))?;
    Ok(outcome.report)
}

fn load_packets(input: &str) -> Result<Vec<PcapPacket>> {
    let path = Path::new(input);
    if path.exists() {
        let bytes = fs::read(path).with_context(|| format!("reading {input}"))?;
        return Ok(capture::read_pcap(&bytes)?);
    }
    let cleaned: String = input
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ':')
        .collect();
    match hex::decode(&cleaned) {
        Ok(data) => Ok(vec![PcapPacket {
            ts_sec: 0,
            ts_usec: 0,
            data,
        }]),
        Err(_) => bail!("{input}: neither a readable file nor a hex string"),
    }
}

fn fmt_time(t: &UtcTimestamp) -> String {
    let ns = t.as_nanos();
    format!("{}.{:09}", ns / 1_000_000_000, ns % 1_000_000_000)
}

fn describe(bytes: &[u8]) -> String {
    match codec::decode_any(bytes) {
        Ok(Some(Frame::Sv(f))) => {
            let s = &f.samples;
            format!(
                "SV    dst {} src {} appId 0x{:04X} svId {} smpCnt {} confRev {} smpSynch {} \
                 I[A] {:.1} {:.1} {:.1} {:.1} V[V] {:.1} {:.1} {:.1} {:.1}",
                f.dst,
                f.src,
                f.app_id,
                f.sv_id,
                f.smp_cnt,
                f.conf_rev,
                f.smp_synch,
                s[0].value as f64 / 1000.0,
                s[1].value as f64 / 1000.0,
                s[2].value as f64 / 1000.0,
                s[3].value as f64 / 1000.0,
                s[4].value as f64 / 100.0,
                s[5].value as f64 / 100.0,
                s[6].value as f64 / 100.0,
                s[7].value as f64 / 100.0,
            )
        }
        Ok(Some(Frame::Goose(f))) => format!(
            "GOOSE dst {} src {} appId 0x{:04X} goId {} gocbRef {} stNum {} sqNum {} t {} \
             TAL {} confRev {} allData {:?}",
            f.dst,
            f.src,
            f.app_id,
            f.go_id,
            f.gocb_ref,
            f.st_num,
            f.sq_num,
            fmt_time(&f.t),
            f.time_allowed_to_live,
            f.conf_rev,
            f.all_data,
        ),
        Ok(None) => format!("other ethertype {:?}", codec::ethertype(bytes)),
        Err(e) => format!("undecodable: {e}"),
    }
}

fn cmd_decode(input: &str) -> Result<ExitCode> {
    let packets = load_packets(input)?;
    let mut out = io::stdout().lock();
    for (i, p) in packets.iter().enumerate() {
        writeln!(
            out,
            "#{i:<6} {}.{:06}  {}",
            p.ts_sec,
            p.ts_usec,
            describe(&p.data)
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(log: &Path, deploy_ns: u64) -> Result<ExitCode> {
    let file = fs::File::open(log).with_context(|| format!("opening {}", log.display()))?;
    let entries = events::read_jsonl(BufReader::new(file))?;
    let chains = timing::decompose_all(&entries)?;
    let mut windows = Vec::new();
    for c in &chains {
        let ChainOrigin::Attack { attack, .. } = &c.origin else {
            continue;
        };
        let first_alert = entries.iter().find_map(|e| match &e.event {
            LogEvent::Alert { latency_ns, .. } if e.at_ns >= c.origin_at => Some(*latency_ns),
            _ => None,
        });
        if let Some(lat) = first_alert {
            windows.push(timing::analyze_window(*attack, c, lat, deploy_ns));
        }
    }
    let section = TimingSection {
        primary: chains.first().cloned(),
        chains,
        windows,
        error: None,
    };
    writeln!(
        io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(&section)?
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Capture packets on a SimTime axis starting at the first packet's second.
fn timeline(packets: &[PcapPacket]) -> (u32, Vec<(SimTime, &[u8])>) {
    let epoch = packets.first().map(|p| p.ts_sec).unwrap_or(0);
    let base = epoch as u64 * 1_000_000_000;
    let frames = packets
        .iter()
        .map(|p| {
            (
                SimTime(p.timestamp_ns().saturating_sub(base)),
                p.data.as_slice(),
            )
        })
        .collect();
    (epoch, frames)
}

fn write_crafted(out: &Path, epoch: u32, frames: Vec<(SimTime, Vec<u8>)>) -> Result<()> {
    let records: Vec<CaptureRecord> = frames
        .into_iter()
        .enumerate()
        .map(|(i, (at, frame))| CaptureRecord {
            publish_seq: i as u64,
            publish_at: at,
            deliver_at: at,
            publisher: "attacker".into(),
            frame,
        })
        .collect();
    let mut f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    capture::write_pcap(&records, epoch, &mut f)?;
    println!("wrote {} frame(s) to {}", records.len(), out.display());
    Ok(())
}

fn cmd_attack(cmd: AttackCmd) -> Result<ExitCode> {
    match cmd {
        AttackCmd::Profiles { capture } => {
            let packets = load_packets(&capture.to_string_lossy())?;
            let (_, frames) = timeline(&packets);
            let learned = attacker::learn_streams(frames);
            println!("{}", serde_json::to_string_pretty(&learned)?);
        }
        AttackCmd::Replay {
            capture,
            index,
            out,
            after_ns,
        } => {
            let packets = load_packets(&capture.to_string_lossy())?;
            let (epoch, frames) = timeline(&packets);
            let Some(&(_, bytes)) = frames.get(index) else {
                bail!("capture has {} frame(s); no index {index}", frames.len());
            };
            codec::decode_goose(bytes).context("replay source is not a GOOSE frame")?;
            let last = frames.last().map(|f| f.0).unwrap_or_default();
            write_crafted(&out, epoch, vec![(last + after_ns, bytes.to_vec())])?;
        }
        AttackCmd::Spoof {
            capture,
            go_id,
            data,
            stale,
            out,
            after_ns,
        } => {
            let packets = load_packets(&capture.to_string_lossy())?;
            let (epoch, frames) = timeline(&packets);
            let last = frames.last().map(|f| f.0).unwrap_or_default();
            let learned = attacker::learn_streams(frames);
            let profile = learned
                .get(StreamKind::Goose, &go_id)
                .with_context(|| format!("no GOOSE stream {go_id:?} in capture"))?;
            let at = last + after_ns;
            let clock = profile.station_clock_ns(at).unwrap_or(0);
            let frame = attacker::synthesize_spoof(
                profile,
                data,
                !stale,
                UtcTimestamp::from_nanos(0, clock),
            )?;
            write_crafted(&out, epoch, vec![(at, codec::encode_goose(&frame)?)])?;
        }
        AttackCmd::Fdi {
            capture,
            sv_id,
            peak,
            count,
            inter_packet_ns,
            frequency,
            sampling_rate,
            out,
        } => {
            let packets = load_packets(&capture.to_string_lossy())?;
            let (epoch, frames) = timeline(&packets);
            let learned = attacker::learn_streams(frames);
            let profile = learned
                .get(StreamKind::Sv, &sv_id)
                .with_context(|| format!("no SV stream {sv_id:?} in capture"))?;
            let crafted = attacker::craft_sv_fdi(
                profile,
                peak,
                inter_packet_ns,
                count,
                frequency,
                sampling_rate,
            )?;
            let base = profile.last_seen;
            write_crafted(
                &out,
                epoch,
                crafted
                    .into_iter()
                    .map(|(off, b)| (base + off, b))
                    .collect(),
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
