//! Activation dump I/O, synthetic dataset generation, and dataset splitting.
//!
//! Dumps use the `FLEN` binary layout (little-endian): a header of magic
//! bytes `FLEN`, u32 version (= 1), u32 hidden dimension `d`; then per
//! record u32 `n`, u32 `T`, u32 `y`, `(n + T) * d` float32 hidden states
//! row-major (prompt rows first, then response rows), and `(n + T)` float32
//! entropies. A JSONL manifest sits next to the dump at
//! `<path>.manifest.jsonl`: one header object, then one line per record with
//! its id, byte offset, and shape. The full byte-level contract lives in
//! `docs/format.md`.
//!
//! States are float32 on disk and float64 in memory; reading and rewriting a
//! dump reproduces it byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};
use crate::pooling::HiddenSequence;

/// Magic bytes of the dump file.
pub const DUMP_MAGIC: [u8; 4] = *b"FLEN";
/// Current dump format version.
pub const DUMP_VERSION: u32 = 1;

/// Per-token entropy increment along synthetic responses. Later tokens get
/// higher entropy, so entropy-guided pooling of a generated prefix weights
/// recent tokens most and the pooled signal coordinate tracks the remaining
/// length with a roughly constant lag instead of smearing over the whole
/// prefix.
pub const RESPONSE_ENTROPY_PER_TOKEN: f64 = 0.2;

/// One sequence: prompt activations, optional response activations, and the
/// ground-truth response length in tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub id: String,
    pub prompt: HiddenSequence,
    /// Absent for static-only dumps (`T = 0` on disk).
    pub response: Option<HiddenSequence>,
    pub y: u32,
}

impl ActivationRecord {
    pub fn new(
        id: String,
        prompt: HiddenSequence,
        response: Option<HiddenSequence>,
        y: u32,
    ) -> Result<Self> {
        if y == 0 {
            return Err(Error::InvalidArgument {
                what: "ActivationRecord",
                reason: format!("record {id}: y must be >= 1"),
            });
        }
        if let Some(resp) = &response {
            if resp.n() as u32 != y {
                return Err(Error::InvalidArgument {
                    what: "ActivationRecord",
                    reason: format!(
                        "record {id}: response has {} tokens but y = {y}",
                        resp.n()
                    ),
                });
            }
            if resp.d() != prompt.d() {
                return Err(Error::DimensionMismatch {
                    what: "ActivationRecord response dim",
                    expected: prompt.d(),
                    got: resp.d(),
                });
            }
        }
        Ok(Self {
            id,
            prompt,
            response,
            y,
        })
    }

    /// Response token count (0 when the response is absent).
    pub fn t(&self) -> u32 {
        self.response.as_ref().map_or(0, |r| r.n() as u32)
    }
}

/// First line of the manifest sidecar.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestHeader {
    pub magic: String,
    pub version: u32,
    pub d: u32,
}

/// One manifest line per record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestLine {
    pub id: String,
    pub byte_offset: u64,
    pub n: u32,
    #[serde(rename = "T")]
    pub t: u32,
    pub y: u32,
}

/// Path of the manifest sidecar for a dump path.
pub fn manifest_path(dump: &Path) -> PathBuf {
    let mut os = dump.as_os_str().to_owned();
    os.push(".manifest.jsonl");
    PathBuf::from(os)
}

/// Write records to a dump file plus its manifest sidecar.
pub fn write_dump(records: &[ActivationRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyInput {
            what: "write_dump records",
        });
    }
    let d = records[0].prompt.d();
    for r in records {
        if r.prompt.d() != d {
            return Err(Error::DimensionMismatch {
                what: "write_dump record dim",
                expected: d,
                got: r.prompt.d(),
            });
        }
    }

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&DUMP_MAGIC)?;
    out.write_u32::<LittleEndian>(DUMP_VERSION)?;
    out.write_u32::<LittleEndian>(d as u32)?;
    let mut offset = 12u64;

    let mut lines = Vec::with_capacity(records.len());
    for r in records {
        let n = r.prompt.n() as u32;
        let t = r.t();
        lines.push(ManifestLine {
            id: r.id.clone(),
            byte_offset: offset,
            n,
            t,
            y: r.y,
        });
        out.write_u32::<LittleEndian>(n)?;
        out.write_u32::<LittleEndian>(t)?;
        out.write_u32::<LittleEndian>(r.y)?;
        for &v in r.prompt.states().data() {
            out.write_f32::<LittleEndian>(v as f32)?;
        }
        if let Some(resp) = &r.response {
            for &v in resp.states().data() {
                out.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        for &v in r.prompt.entropies() {
            out.write_f32::<LittleEndian>(v as f32)?;
        }
        if let Some(resp) = &r.response {
            for &v in resp.entropies() {
                out.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        let tokens = (n + t) as u64;
        offset += 12 + tokens * d as u64 * 4 + tokens * 4;
    }
    out.flush()?;

    let mut mf = BufWriter::new(File::create(manifest_path(path))?);
    let header = ManifestHeader {
        magic: "FLEN".into(),
        version: DUMP_VERSION,
        d: d as u32,
    };
    serde_json::to_writer(&mut mf, &header)?;
    mf.write_all(b"\n")?;
    for line in &lines {
        serde_json::to_writer(&mut mf, line)?;
        mf.write_all(b"\n")?;
    }
    mf.flush()?;
    Ok(())
}

/// Read the manifest sidecar of a dump.
pub fn read_manifest(dump: &Path) -> Result<(ManifestHeader, Vec<ManifestLine>)> {
    let mpath = manifest_path(dump);
    let file = File::open(&mpath).map_err(|e| Error::Manifest {
        reason: format!("cannot open {}: {e}", mpath.display()),
    })?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Manifest {
            reason: "manifest is empty".into(),
        })?
        .map_err(Error::Io)?;
    let header: ManifestHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::Manifest {
            reason: format!("bad manifest header: {e}"),
        })?;
    if header.magic != "FLEN" {
        return Err(Error::Manifest {
            reason: format!("manifest magic '{}' is not FLEN", header.magic),
        });
    }
    if header.version != DUMP_VERSION {
        return Err(Error::BadVersion {
            found: header.version,
            supported: DUMP_VERSION,
        });
    }
    let mut entries = Vec::new();
    let mut prev_offset = 0u64;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestLine = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            reason: format!("bad manifest line {}: {e}", i + 2),
        })?;
        if entry.byte_offset <= prev_offset {
            return Err(Error::Manifest {
                reason: format!(
                    "offsets not strictly increasing at record {}",
                    entry.id
                ),
            });
        }
        prev_offset = entry.byte_offset;
        entries.push(entry);
    }
    Ok((header, entries))
}

fn read_f32s(r: &mut impl Read, count: usize, context: &str) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let v = r.read_f32::<LittleEndian>().map_err(|_| Error::Truncated {
            context: context.to_string(),
        })?;
        out.push(v as f64);
    }
    Ok(out)
}

/// Read a dump file and its manifest back into records.
pub fn read_dump(path: &Path) -> Result<Vec<ActivationRecord>> {
    let (header, entries) = read_manifest(path)?;
    let file_len = std::fs::metadata(path)?.len();
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated {
        context: "dump header magic".into(),
    })?;
    if magic != DUMP_MAGIC {
        return Err(Error::BadMagic {
            expected: DUMP_MAGIC,
            found: magic,
        });
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
        context: "dump header version".into(),
    })?;
    if version != DUMP_VERSION {
        return Err(Error::BadVersion {
            found: version,
            supported: DUMP_VERSION,
        });
    }
    let d = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
        context: "dump header dimension".into(),
    })? as usize;
    if header.d as usize != d {
        return Err(Error::Manifest {
            reason: format!("manifest d = {} but dump header d = {d}", header.d),
        });
    }

    let mut records = Vec::with_capacity(entries.len());
    let mut pos = 12u64;
    for entry in &entries {
        if entry.byte_offset >= file_len {
            return Err(Error::OffsetOutOfRange {
                id: entry.id.clone(),
                offset: entry.byte_offset,
                file_len,
            });
        }
        if entry.byte_offset != pos {
            return Err(Error::Manifest {
                reason: format!(
                    "record {} at offset {} but reader is at {pos}",
                    entry.id, entry.byte_offset
                ),
            });
        }
        let n = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
            context: format!("record {} header", entry.id),
        })?;
        let t = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
            context: format!("record {} header", entry.id),
        })?;
        let y = r.read_u32::<LittleEndian>().map_err(|_| Error::Truncated {
            context: format!("record {} header", entry.id),
        })?;
        if n == 0 {
            return Err(Error::ZeroTokens {
                id: entry.id.clone(),
            });
        }
        if n != entry.n || t != entry.t || y != entry.y {
            return Err(Error::Manifest {
                reason: format!(
                    "record {}: manifest says n={} T={} y={}, file says n={n} T={t} y={y}",
                    entry.id, entry.n, entry.t, entry.y
                ),
            });
        }
        let tokens = (n + t) as usize;
        let states = read_f32s(&mut r, tokens * d, &format!("record {} states", entry.id))?;
        let entropies = read_f32s(&mut r, tokens, &format!("record {} entropies", entry.id))?;

        let (prompt_states, resp_states) = states.split_at(n as usize * d);
        let (prompt_ent, resp_ent) = entropies.split_at(n as usize);
        let prompt = HiddenSequence::new(
            Matrix::from_vec(n as usize, d, prompt_states.to_vec())?,
            prompt_ent.to_vec(),
        )?;
        let response = if t > 0 {
            Some(HiddenSequence::new(
                Matrix::from_vec(t as usize, d, resp_states.to_vec())?,
                resp_ent.to_vec(),
            )?)
        } else {
            None
        };
        records.push(ActivationRecord::new(entry.id.clone(), prompt, response, y)?);
        pos += 12 + tokens as u64 * d as u64 * 4 + tokens as u64 * 4;
    }
    Ok(records)
}

/// Configuration of the synthetic dataset generator.
///
/// The generator plants a recoverable length signal: a seeded fraction of
/// prompt tokens are "informative" (high entropy, coordinate 0 carries
/// `y / max_len` plus noise) while the rest are distractors (low entropy,
/// coordinate 0 is pure noise). Response tokens carry a decaying
/// remaining-length signal `(y - t) / max_len` in coordinate 0, with
/// entropy rising by [`RESPONSE_ENTROPY_PER_TOKEN`] per token. All other
/// coordinates are standard normal noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_records: usize,
    pub d: usize,
    pub prompt_len_min: usize,
    pub prompt_len_max: usize,
    pub log_mu: f64,
    pub log_sigma: f64,
    pub max_len: u32,
    pub signal_fraction: f64,
    pub entropy_hi: f64,
    pub entropy_lo: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_records: 2500,
            d: 16,
            prompt_len_min: 16,
            prompt_len_max: 48,
            log_mu: 5.0,
            log_sigma: 0.8,
            max_len: 1024,
            signal_fraction: 0.25,
            entropy_hi: 2.0,
            entropy_lo: 0.1,
            noise_sigma: 0.05,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &'static str, reason: String| Err(Error::InvalidArgument { what, reason });
        if self.num_records == 0 {
            return bad("num-records", "must be >= 1".into());
        }
        if self.d == 0 {
            return bad("dim", "must be >= 1".into());
        }
        if self.prompt_len_min == 0 || self.prompt_len_min > self.prompt_len_max {
            return bad(
                "prompt-len",
                format!(
                    "range [{}, {}] invalid",
                    self.prompt_len_min, self.prompt_len_max
                ),
            );
        }
        if self.max_len == 0 {
            return bad("max-len", "must be >= 1".into());
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return bad(
                "signal-fraction",
                format!("{} outside (0, 1]", self.signal_fraction),
            );
        }
        if self.entropy_hi < 0.0 || self.entropy_lo < 0.0 {
            return bad("entropy", "entropy levels must be non-negative".into());
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return bad("noise-sigma", format!("{} invalid", self.noise_sigma));
        }
        if self.log_sigma < 0.0 || !self.log_sigma.is_finite() {
            return bad("log-sigma", format!("{} invalid", self.log_sigma));
        }
        Ok(())
    }

    /// One-line `key=value` echo for report headers.
    pub fn echo(&self) -> String {
        format!(
            "num_records={} d={} prompt_len=[{},{}] log_mu={} log_sigma={} max_len={} signal_fraction={} entropy_hi={} entropy_lo={} noise_sigma={} seed={}",
            self.num_records,
            self.d,
            self.prompt_len_min,
            self.prompt_len_max,
            self.log_mu,
            self.log_sigma,
            self.max_len,
            self.signal_fraction,
            self.entropy_hi,
            self.entropy_lo,
            self.noise_sigma,
            self.seed
        )
    }
}

/// Generate a seeded synthetic dataset with a planted length signal.
///
/// Fully determined by the config: the draw order is fixed (per record:
/// length, prompt size, informative positions, then states row-major with
/// one normal draw per cell).
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<ActivationRecord>> {
    config.validate()?;
    let mut rng = SeededRng::new(config.seed);
    let mut records = Vec::with_capacity(config.num_records);
    let max_len = config.max_len as f64;

    for i in 0..config.num_records {
        let y = rng
            .lognormal(config.log_mu, config.log_sigma)
            .round()
            .clamp(1.0, max_len) as u32;
        let n = rng.uniform_range(config.prompt_len_min as u64, config.prompt_len_max as u64)
            as usize;
        let num_informative = ((config.signal_fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut positions: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut positions);
        let mut informative = vec![false; n];
        for &p in positions.iter().take(num_informative) {
            informative[p] = true;
        }

        let signal = y as f64 / max_len;
        let mut prompt_states = Vec::with_capacity(n * config.d);
        let mut prompt_entropies = Vec::with_capacity(n);
        for &info in &informative {
            for c in 0..config.d {
                let v = if c == 0 {
                    let noise = rng.normal(0.0, config.noise_sigma);
                    if info {
                        signal + noise
                    } else {
                        noise
                    }
                } else {
                    rng.normal(0.0, 1.0)
                };
                prompt_states.push(v);
            }
            prompt_entropies.push(if info {
                config.entropy_hi
            } else {
                config.entropy_lo
            });
        }
        let prompt = HiddenSequence::new(
            Matrix::from_vec(n, config.d, prompt_states)?,
            prompt_entropies,
        )?;

        let t_len = y as usize;
        let mut resp_states = Vec::with_capacity(t_len * config.d);
        for t in 1..=t_len {
            for c in 0..config.d {
                let v = if c == 0 {
                    (y as f64 - t as f64) / max_len + rng.normal(0.0, config.noise_sigma)
                } else {
                    rng.normal(0.0, 1.0)
                };
                resp_states.push(v);
            }
        }
        let resp_entropies: Vec<f64> = (1..=t_len)
            .map(|t| config.entropy_lo + RESPONSE_ENTROPY_PER_TOKEN * t as f64)
            .collect();
        let response = HiddenSequence::new(
            Matrix::from_vec(t_len, config.d, resp_states)?,
            resp_entropies,
        )?;

        records.push(ActivationRecord::new(
            format!("rec{i:05}"),
            prompt,
            Some(response),
            y,
        )?);
    }
    Ok(records)
}

/// Seeded shuffle followed by a contiguous 3-way split.
///
/// Part sizes are `floor(N * r_k / sum(r))`; the remainder goes to train.
pub fn split(
    records: Vec<ActivationRecord>,
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<(
    Vec<ActivationRecord>,
    Vec<ActivationRecord>,
    Vec<ActivationRecord>,
)> {
    let (r0, r1, r2) = ratios;
    if r0 == 0 || r1 == 0 || r2 == 0 {
        return Err(Error::InvalidArgument {
            what: "split ratios",
            reason: "all ratios must be positive".into(),
        });
    }
    let n = records.len();
    if n < 3 {
        return Err(Error::InvalidArgument {
            what: "split",
            reason: format!("{n} records cannot fill 3 parts"),
        });
    }
    let total = (r0 + r1 + r2) as usize;
    let n_val = n * r1 as usize / total;
    let n_test = n * r2 as usize / total;
    let n_train = n - n_val - n_test; // floor share plus remainder

    let mut shuffled = records;
    let mut rng = SeededRng::new(seed);
    rng.shuffle(&mut shuffled);

    let mut iter = shuffled.into_iter();
    let train: Vec<_> = iter.by_ref().take(n_train).collect();
    let val: Vec<_> = iter.by_ref().take(n_val).collect();
    let test: Vec<_> = iter.collect();
    Ok((train, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small_config() -> SynthConfig {
        SynthConfig {
            num_records: 12,
            d: 4,
            prompt_len_min: 3,
            prompt_len_max: 6,
            log_mu: 2.0,
            log_sigma: 0.6,
            max_len: 64,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let cfg = small_config();
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synth_noiseless_signal_is_exact() {
        let cfg = SynthConfig {
            signal_fraction: 1.0,
            noise_sigma: 0.0,
            ..small_config()
        };
        let records = synth_generate(&cfg).unwrap();
        for r in &records {
            let expected = r.y as f64 / cfg.max_len as f64;
            for t in 0..r.prompt.n() {
                assert_eq!(r.prompt.row(t)[0], expected);
            }
        }
    }

    #[test]
    fn synth_default_lengths_are_right_skewed() {
        let cfg = SynthConfig::default();
        let records = synth_generate(&cfg).unwrap();
        assert_eq!(records.len(), 2500);
        let mut lengths: Vec<u32> = records.iter().map(|r| r.y).collect();
        lengths.sort_unstable();
        let mean = lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64;
        let median = lengths[lengths.len() / 2] as f64;
        assert!(
            mean > median,
            "expected right-skew: mean {mean} <= median {median}"
        );
    }

    #[test]
    fn dump_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let records = synth_generate(&cfg).unwrap();
        let p1 = dir.path().join("a.flen");
        let p2 = dir.path().join("b.flen");
        write_dump(&records, &p1).unwrap();
        let loaded = read_dump(&p1).unwrap();
        assert_eq!(loaded.len(), records.len());
        write_dump(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(
            std::fs::read(manifest_path(&p1)).unwrap(),
            std::fs::read(manifest_path(&p2)).unwrap()
        );
    }

    #[test]
    fn dump_corrupt_magic_names_found_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let records = synth_generate(&small_config()).unwrap();
        let path = dir.path().join("x.flen");
        write_dump(&records, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0..4].copy_from_slice(b"JUNK");
        std::fs::write(&path, bytes).unwrap();
        match read_dump(&path) {
            Err(Error::BadMagic { found, .. }) => assert_eq!(&found, b"JUNK"),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn dump_truncated_file_is_named_error() {
        let dir = tempfile::tempdir().unwrap();
        let records = synth_generate(&small_config()).unwrap();
        let path = dir.path().join("x.flen");
        write_dump(&records, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(read_dump(&path), Err(Error::Truncated { .. })));
    }

    #[test]
    fn dump_offset_out_of_range_is_named_error() {
        let dir = tempfile::tempdir().unwrap();
        let records = synth_generate(&small_config()).unwrap();
        let path = dir.path().join("x.flen");
        write_dump(&records, &path).unwrap();
        // push the last record's offset past the end of the file
        let manifest = std::fs::read_to_string(manifest_path(&path)).unwrap();
        let mut lines: Vec<String> = manifest.lines().map(String::from).collect();
        let mut last: ManifestLine = serde_json::from_str(lines.last().unwrap()).unwrap();
        last.byte_offset = 99_999_999;
        *lines.last_mut().unwrap() = serde_json::to_string(&last).unwrap();
        std::fs::write(manifest_path(&path), lines.join("\n") + "\n").unwrap();
        assert!(matches!(
            read_dump(&path),
            Err(Error::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn static_only_record_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let prompt = HiddenSequence::new(
            Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            vec![0.5, 0.25],
        )
        .unwrap();
        let record = ActivationRecord::new("static".into(), prompt, None, 7).unwrap();
        let path = dir.path().join("s.flen");
        write_dump(&[record.clone()], &path).unwrap();
        let loaded = read_dump(&path).unwrap();
        assert_eq!(loaded[0], record);
        assert_eq!(loaded[0].t(), 0);
        assert_eq!(loaded[0].y, 7);
    }

    #[test]
    fn split_100_into_3_1_1_is_60_20_20() {
        let records = synth_generate(&SynthConfig {
            num_records: 100,
            ..small_config()
        })
        .unwrap();
        let all_ids: HashSet<String> = records.iter().map(|r| r.id.clone()).collect();
        let (train, val, test) = split(records, (3, 1, 1), 42).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (60, 20, 20));
        let mut seen = HashSet::new();
        for r in train.iter().chain(&val).chain(&test) {
            assert!(seen.insert(r.id.clone()), "duplicate id {}", r.id);
        }
        assert_eq!(seen, all_ids);
    }

    #[test]
    fn split_tiny_and_remainder_cases() {
        let records = synth_generate(&SynthConfig {
            num_records: 5,
            ..small_config()
        })
        .unwrap();
        let (train, val, test) = split(records, (3, 1, 1), 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (3, 1, 1));

        let records = synth_generate(&SynthConfig {
            num_records: 7,
            ..small_config()
        })
        .unwrap();
        let (train, val, test) = split(records, (3, 1, 1), 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (5, 1, 1));

        let records = synth_generate(&SynthConfig {
            num_records: 2,
            ..small_config()
        })
        .unwrap();
        assert!(split(records, (3, 1, 1), 1).is_err());
    }

    #[test]
    fn split_same_seed_same_partition() {
        let records = synth_generate(&small_config()).unwrap();
        let ids = |v: &[ActivationRecord]| v.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        let (a1, b1, c1) = split(records.clone(), (3, 1, 1), 9).unwrap();
        let (a2, b2, c2) = split(records, (3, 1, 1), 9).unwrap();
        assert_eq!(ids(&a1), ids(&a2));
        assert_eq!(ids(&b1), ids(&b2));
        assert_eq!(ids(&c1), ids(&c2));
    }
}
