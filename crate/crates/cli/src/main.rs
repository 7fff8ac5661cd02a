//! `speakbox` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use speakbox_core::metrics::{timing_summary, EvalMode};
use speakbox_core::pipeline::{self, write_file};
use speakbox_core::{
    AlignmentConfig, AnnotationSet, EmbeddingTable, Error, Segmenter, SessionLog, SimParams, Transcript, Vocabulary,
};

#[derive(Parser)]
#[command(name = "speakbox", version, about = "Label clicked objects from spoken class names")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align spoken labels with clicked objects and write annotations.
    Align(AlignArgs),
    /// Score annotations against ground truth.
    Eval(EvalArgs),
    /// Generate synthetic sessions from ground-truth annotations.
    Simulate(SimulateArgs),
    /// Print the chosen transcription and its segments for each utterance.
    Segment(SegmentArgs),
}

#[derive(Args)]
struct SegmenterArgs {
    /// Class vocabulary JSON.
    #[arg(long)]
    vocab: PathBuf,
    /// Word embeddings, one `token v1 .. vd` line per token.
    #[arg(long)]
    embeddings: PathBuf,
    /// Longest word run mapped to one class (default: longest class name + 1).
    #[arg(long)]
    max_segment_len: Option<usize>,
    /// Drop spoken labels whose distance to the nearest class exceeds this.
    #[arg(long)]
    reject_above: Option<f64>,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    segmenter: SegmenterArgs,
    /// Directory holding `<image_id>.json` transcripts.
    #[arg(long)]
    transcripts: PathBuf,
    /// Session event log JSON.
    #[arg(long)]
    events: PathBuf,
    /// Output annotation file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = speakbox_core::aligner::DEFAULT_GAP_PENALTY)]
    gap_penalty: f64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write alignment and timing diagnostics here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Annotations to score.
    #[arg(long)]
    annotations: PathBuf,
    /// Ground-truth annotations (boxes).
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, default_value = "boxes")]
    match_mode: EvalMode,
    /// Report JSON path; a per-image CSV is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Per-image CSV path (default: `--out` with a .csv extension).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Ground-truth annotations to simulate sessions for.
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Output directory for events.json, transcripts/ and trace.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = SimParams::default().speech_lead_mean)]
    speech_lead_mean: f64,
    #[arg(long, default_value_t = SimParams::default().speech_lead_sd)]
    speech_lead_sd: f64,
    #[arg(long, default_value_t = SimParams::default().utterance_duration.0)]
    utterance_min: f64,
    #[arg(long, default_value_t = SimParams::default().utterance_duration.1)]
    utterance_max: f64,
    #[arg(long, default_value_t = SimParams::default().box_duration.0)]
    box_min: f64,
    #[arg(long, default_value_t = SimParams::default().box_duration.1)]
    box_max: f64,
    #[arg(long, default_value_t = SimParams::default().object_pause.0)]
    pause_min: f64,
    #[arg(long, default_value_t = SimParams::default().object_pause.1)]
    pause_max: f64,
    #[arg(long, default_value_t = 0.0)]
    speech_tail: f64,
    #[arg(long, default_value_t = 0.0)]
    pause_merge_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    asr_substitution_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    forget_speech_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    discard_box_prob: f64,
    #[arg(long, default_value_t = 0.0)]
    click_jitter: f64,
}

impl SimulateArgs {
    fn params(&self) -> SimParams {
        SimParams {
            seed: self.seed,
            speech_lead_mean: self.speech_lead_mean,
            speech_lead_sd: self.speech_lead_sd,
            utterance_duration: (self.utterance_min, self.utterance_max),
            box_duration: (self.box_min, self.box_max),
            object_pause: (self.pause_min, self.pause_max),
            speech_tail: self.speech_tail,
            pause_merge_prob: self.pause_merge_prob,
            asr_substitution_prob: self.asr_substitution_prob,
            forget_speech_prob: self.forget_speech_prob,
            discard_box_prob: self.discard_box_prob,
            click_jitter: self.click_jitter,
        }
    }
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    segmenter: SegmenterArgs,
    /// A single transcript JSON file.
    #[arg(long)]
    transcripts: PathBuf,
}

fn load_model(args: &SegmenterArgs) -> Result<(Vocabulary, EmbeddingTable), Error> {
    Ok((Vocabulary::load(&args.vocab)?, EmbeddingTable::load(&args.embeddings)?))
}

fn build_segmenter<'a>(args: &SegmenterArgs, vocab: &'a Vocabulary, table: &'a EmbeddingTable) -> Segmenter<'a> {
    let mut s = Segmenter::new(vocab, table).with_reject_above(args.reject_above);
    if let Some(len) = args.max_segment_len {
        s = s.with_max_segment_len(len);
    }
    s
}

fn usage(message: String) -> Error {
    Error::Invalid {
        context: "arguments".into(),
        message,
    }
}

fn run_align(args: &AlignArgs) -> Result<(), Error> {
    if args.segmenter.max_segment_len == Some(0) {
        return Err(usage("--max-segment-len must be positive".into()));
    }
    let cfg = AlignmentConfig::new(args.gap_penalty)?;
    let (vocab, table) = load_model(&args.segmenter)?;
    let segmenter = build_segmenter(&args.segmenter, &vocab, &table);
    let log = SessionLog::load(&args.events)?;
    let transcripts = pipeline::load_transcripts(&args.transcripts, &log)?;
    let workers = args.workers.unwrap_or_else(default_workers);
    let results = pipeline::annotate_all(&segmenter, &transcripts, &log, &cfg, workers)?;
    write_file(&args.out, &pipeline::annotations_of(&results).to_json())?;

    if let Some(path) = &args.report {
        let ordered: Vec<&Transcript> = log.images.iter().filter_map(|i| transcripts.get(&i.image_id)).collect();
        let report = json!({
            "alignment": pipeline::align_report(&results),
            "timing": timing_summary(&log, &ordered),
        });
        write_file(path, &report.to_string())?;
    }
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<(), Error> {
    let annos = AnnotationSet::load(&args.annotations)?;
    let gt = AnnotationSet::load(&args.ground_truth)?;
    let report = speakbox_core::evaluate(&annos, &gt, args.match_mode)?;
    write_file(&args.out, &report.to_json())?;
    let csv_path = args.csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_file(&csv_path, &String::from_utf8(buf).expect("csv is utf-8"))?;
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<(), Error> {
    let gt = AnnotationSet::load(&args.ground_truth)?;
    let vocab = Vocabulary::load(&args.vocab)?;
    let workers = args.workers.unwrap_or_else(default_workers);
    let sim = pipeline::simulate_with_workers(&gt, &vocab, &args.params(), workers)?;
    pipeline::write_simulation(&args.out, &sim)
}

fn run_segment(args: &SegmentArgs) -> Result<(), Error> {
    let (vocab, table) = load_model(&args.segmenter)?;
    let segmenter = build_segmenter(&args.segmenter, &vocab, &table);
    let transcript = Transcript::load(&args.transcripts)?;
    for (index, utterance) in transcript.utterances.iter().enumerate() {
        let (chosen, seg) = segmenter.select_transcription(utterance);
        let alt = &utterance.alternatives[chosen];
        let segments: Vec<_> = seg
            .segments
            .iter()
            .map(|s| {
                let words = &alt.words[s.start..s.end];
                json!({
                    "tokens": words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" "),
                    "class": s.class.map(|c| vocab.class(c).id.clone()),
                    "cost": s.cost,
                    "start": words[0].start,
                    "end": words[words.len() - 1].end,
                })
            })
            .collect();
        println!(
            "{}",
            json!({
                "utterance": index,
                "chosen_rank": alt.rank,
                "text": alt.text(),
                "total_cost": seg.total_cost,
                "segments": segments,
            })
        );
    }
    Ok(())
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn exit_code(err: &Error) -> ExitCode {
    if err.is_io() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPEAKBOX_LOG", "warn"))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Align(a) => run_align(a),
        Command::Eval(a) => run_eval(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Segment(a) => run_segment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("speakbox: {e}");
            exit_code(&e)
        }
    }
}
