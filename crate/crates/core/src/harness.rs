//! The command surface behind the `qopt` binary: optimize, select, encode
//! and compare. Every command writes plain files so runs can be inspected
//! and diffed.

use crate::codec::{decode_jpeg, encode_jpeg, QuantTableSet};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::image::{load_image, save_png, ImagePlanes};
use crate::qnet::save_checkpoint;
use crate::report::{compare, write_csv, ReportRow};
use crate::train::{train, RunRecord};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

pub const RUN_RECORD: &str = "run_record.json";
pub const TIMING: &str = "timing.json";
pub const CONFIG_SNAPSHOT: &str = "config.txt";
pub const CANDIDATE_DIR: &str = "candidates";
pub const CANDIDATE_INDEX: &str = "candidates.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const FINAL_NAME: &str = "final.jpg";

/// One exported candidate; paths are relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub bin: usize,
    pub bin_low: f64,
    pub bin_high: f64,
    pub epoch: usize,
    pub ms_ssim: f64,
    pub estimated_bits: u64,
    pub size_bytes: usize,
    pub jpeg: String,
    pub tables: String,
    pub preview: String,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub record: RunRecord,
    pub candidates: Vec<CandidateEntry>,
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_context(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| io_context(path, e))
}

pub fn image_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

pub fn load_input(path: &Path) -> Result<ImagePlanes> {
    if !path.is_file() {
        return Err(io_context(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    load_image(path)
}

/// Trains on the image and writes the run directory.
pub fn cmd_optimize(input: &Path, cfg: &RunConfig, out: &Path) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let img = load_input(input)?;
    let run = train(&img, cfg)?;
    let cand_dir = out.join(CANDIDATE_DIR);
    fs::create_dir_all(&cand_dir).map_err(|e| io_context(&cand_dir, e))?;

    let codec = img.to_codec_space();
    let id = image_id(input);
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    for (bin, cand) in run.record.bins.candidates() {
        let file = encode_jpeg(&codec, &cand.tables)?;
        let stem = format!("bin{bin:02}_{}B", file.size_bytes);
        let entry = CandidateEntry {
            bin,
            bin_low: cfg.bins.edges(bin).0,
            bin_high: cfg.bins.edges(bin).1,
            epoch: cand.epoch,
            ms_ssim: cand.ms_ssim,
            estimated_bits: cand.estimated_bits,
            size_bytes: file.size_bytes,
            jpeg: format!("{CANDIDATE_DIR}/{stem}.jpg"),
            tables: format!("{CANDIDATE_DIR}/{stem}.tables.json"),
            preview: format!("{CANDIDATE_DIR}/{stem}.png"),
        };
        write_file(&out.join(&entry.jpeg), &file.bytes)?;
        write_file(&out.join(&entry.tables), cand.tables.to_json()?)?;
        let (preview, _) = decode_jpeg(&file.bytes)?;
        save_png(&preview, out.join(&entry.preview))?;
        rows.push(ReportRow {
            image_id: id.clone(),
            method: stem,
            size_bytes: Some(file.size_bytes),
            ms_ssim: Some(cand.ms_ssim),
            bpp: Some(file.size_bytes as f64 * 8.0 / (img.width() * img.height()) as f64),
        });
        entries.push(entry);
    }

    write_file(&out.join(RUN_RECORD), serde_json::to_string_pretty(&run.record)?)?;
    write_file(
        &out.join(TIMING),
        serde_json::to_string_pretty(&serde_json::json!({ "wall_clock_seconds": run.record.wall_clock_seconds }))?,
    )?;
    write_file(&out.join(CONFIG_SNAPSHOT), cfg.to_text())?;
    write_file(&out.join(CANDIDATE_INDEX), serde_json::to_string_pretty(&entries)?)?;
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv)?;
    write_file(&out.join(SUMMARY_CSV), csv)?;
    write_file(&out.join(SUMMARY_TXT), summary_text(&id, &run.record, &entries))?;
    save_checkpoint(&out.join(CHECKPOINT_DIR), &run.model, &run.params)?;
    Ok(OptimizeOutcome {
        record: run.record,
        candidates: entries,
    })
}

fn summary_text(id: &str, record: &RunRecord, entries: &[CandidateEntry]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "image {id}: {}x{}, {} channel(s)", record.image.width, record.image.height, record.image.channels);
    let _ = writeln!(
        s,
        "epochs {}, samples {}, dropped candidates {}",
        record.epochs.len(),
        record.samples_used,
        record.bins.dropped
    );
    let _ = writeln!(
        s,
        "warm start: ms-ssim {:.5}, {} bytes",
        record.warm_start.ms_ssim, record.warm_start.size_bytes
    );
    let _ = writeln!(s, "{:>10}  {:>5}  {:>8}  {:>9}  file", "bin", "epoch", "ms-ssim", "bytes");
    for e in entries {
        let _ = writeln!(
            s,
            "{:>10}  {:>5}  {:>8.5}  {:>9}  {}",
            format!("{:.2}-{:.2}", e.bin_low, e.bin_high),
            e.epoch,
            e.ms_ssim,
            e.size_bytes,
            e.jpeg
        );
    }
    s
}

pub fn load_candidates(run_dir: &Path) -> Result<Vec<CandidateEntry>> {
    let text = read_file(&run_dir.join(CANDIDATE_INDEX))?;
    Ok(serde_json::from_slice(&text)?)
}

/// Candidates ordered by size, smallest first.
pub fn ordered_by_size(mut entries: Vec<CandidateEntry>) -> Vec<CandidateEntry> {
    entries.sort_by(|a, b| a.size_bytes.cmp(&b.size_bytes).then(b.ms_ssim.total_cmp(&a.ms_ssim)));
    entries
}

/// Smallest candidate whose MS-SSIM reaches `threshold`.
pub fn pick_by_threshold(entries: &[CandidateEntry], threshold: f64) -> Result<&CandidateEntry> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidParams(format!("threshold {threshold} must be >= 0")));
    }
    entries
        .iter()
        .filter(|e| e.ms_ssim >= threshold)
        .min_by(|a, b| a.size_bytes.cmp(&b.size_bytes).then(b.ms_ssim.total_cmp(&a.ms_ssim)))
        .ok_or_else(|| Error::Selection(format!("no candidate reaches MS-SSIM {threshold}")))
}

pub enum Selection<'a> {
    Threshold(f64),
    Interactive {
        input: &'a mut dyn BufRead,
        output: &'a mut dyn Write,
    },
}

/// Lists the candidates of a run, takes a choice and copies that file to
/// `dest` (default `final.jpg` in the run directory).
pub fn cmd_select(run_dir: &Path, selection: Selection<'_>, dest: Option<&Path>) -> Result<PathBuf> {
    let entries = ordered_by_size(load_candidates(run_dir)?);
    if entries.is_empty() {
        return Err(Error::Selection(format!("{} lists no candidates", run_dir.display())));
    }
    let chosen = match selection {
        Selection::Threshold(t) => pick_by_threshold(&entries, t)?,
        Selection::Interactive { input, output } => {
            for (i, e) in entries.iter().enumerate() {
                writeln!(output, "[{i}] {:>9} bytes  ms-ssim {:.5}  {}", e.size_bytes, e.ms_ssim, e.preview)?;
            }
            write!(output, "choose a candidate [0-{}]: ", entries.len() - 1)?;
            output.flush()?;
            let mut line = String::new();
            input.read_line(&mut line)?;
            let i: usize = line
                .trim()
                .parse()
                .map_err(|_| Error::Selection(format!("not a candidate number: {:?}", line.trim())))?;
            entries
                .get(i)
                .ok_or_else(|| Error::Selection(format!("no candidate {i}")))?
        }
    };
    let dest = dest.map_or_else(|| run_dir.join(FINAL_NAME), Path::to_path_buf);
    let bytes = read_file(&run_dir.join(&chosen.jpeg))?;
    write_file(&dest, bytes)?;
    Ok(dest)
}

/// Encodes the image with the table set stored at `tables`.
pub fn cmd_encode(input: &Path, tables: &Path, out: &Path) -> Result<usize> {
    let img = load_input(input)?;
    let text = String::from_utf8(read_file(tables)?).map_err(|e| Error::InvalidTable(e.to_string()))?;
    let set = QuantTableSet::from_json(&text)?;
    let set = if set.quantized_export().is_some() { set } else { set.export() };
    let file = encode_jpeg(&img.to_codec_space(), &set)?;
    write_file(out, &file.bytes)?;
    Ok(file.size_bytes)
}

/// Scores each file against the input, adds the baselines and writes the
/// CSV. Files that fail to decode become failed rows.
pub fn cmd_compare(input: &Path, files: &[PathBuf], out: &Path, cfg: &RunConfig) -> Result<(Vec<ReportRow>, Vec<(String, String)>)> {
    cfg.ms_ssim.validate()?;
    let img = load_input(input)?;
    let mut labelled = Vec::with_capacity(files.len());
    let mut unreadable = Vec::new();
    for f in files {
        match read_file(f) {
            Ok(bytes) => labelled.push((image_id(f), bytes)),
            Err(e) => {
                unreadable.push((image_id(f), e.to_string()));
                labelled.push((image_id(f), Vec::new()));
            }
        }
    }
    let (rows, mut failures) = compare(&img, &image_id(input), &labelled, &cfg.ms_ssim)?;
    failures.retain(|(m, _)| !unreadable.iter().any(|(u, _)| u == m));
    unreadable.extend(failures);
    let mut csv = Vec::new();
    write_csv(&rows, &mut csv)?;
    write_file(out, csv)?;
    Ok((rows, unreadable))
}
