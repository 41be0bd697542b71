//! On-disk dataset layout.
//!
//! ```text
//! <dir>/
//!   manifest     textual, versioned; counts, config hash, splits,
//!                per-record image digests
//!   labels       one line per record: id, seed, face count, then per
//!                face `box x1 y1 x2 y2 lm <10 floats> attrs <M ints>`
//!   images/
//!     rec_00000.bin   "JFIM" magic, u32 version/channels/height/width
//!                     (little-endian), then f32 little-endian pixels
//! ```
//!
//! Floats in `labels` use Rust's shortest round-trip formatting, so read
//! after write is bit-exact. Image pixels are generated f32-exact.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::{generate_scene, FaceAnnotation, GenConfig, GlyphStyle, SceneRecord};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::tensor::Tensor;

const MANIFEST_MAGIC: &str = "JFDS";
const IMAGE_MAGIC: &[u8; 4] = b"JFIM";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DatasetManifest {
    pub version: u32,
    pub records: usize,
    pub attr_count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub master_seed: u64,
    pub style: GlyphStyle,
    pub config_hash: String,
    /// (split, start, end) half-open record ranges.
    pub splits: Vec<(Split, usize, usize)>,
    pub digests: Vec<String>,
}

impl DatasetManifest {
    pub fn split_range(&self, split: Split) -> std::ops::Range<usize> {
        self.splits
            .iter()
            .find(|(s, _, _)| *s == split)
            .map(|&(_, a, b)| a..b)
            .unwrap_or(0..0)
    }
}

/// Canonical flat serialization of a generator config; its SHA-256 is the
/// dataset's config hash.
pub fn gen_config_canonical(config: &GenConfig, master_seed: u64, count: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "gen.attr_count = {}", config.attr_count);
    let _ = writeln!(s, "gen.clutter = {}", config.clutter);
    let _ = writeln!(s, "gen.count = {count}");
    let _ = writeln!(s, "gen.faces_max = {}", config.faces_max);
    let _ = writeln!(s, "gen.faces_min = {}", config.faces_min);
    let _ = writeln!(s, "gen.image_h = {}", config.image_h);
    let _ = writeln!(s, "gen.image_w = {}", config.image_w);
    let _ = writeln!(s, "gen.margin = {}", config.margin);
    let _ = writeln!(s, "gen.master_seed = {master_seed}");
    let _ = writeln!(s, "gen.occlusion = {}", config.occlusion);
    let _ = writeln!(s, "gen.style = {}", config.style.as_str());
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Per-record generation seed: a dedicated RNG stream keyed by the record
/// index, independent of every other consumer of the master seed.
fn record_seed(master_seed: u64, index: usize) -> u64 {
    use rand::RngCore;
    let mut rng = crate::stream_rng(master_seed, 0x5eed_0000 + index as u64);
    rng.next_u64()
}

struct LabelLine {
    seed: u64,
    faces: Vec<FaceAnnotation>,
}

pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    labels: Vec<LabelLine>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.records
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn image_path(dir: &Path, index: usize) -> PathBuf {
        dir.join("images").join(format!("rec_{index:05}.bin"))
    }

    /// Generates `count` records and writes the full dataset with an
    /// 80/10/10 train/val/test split by record index.
    pub fn generate(
        dir: &Path,
        config: &GenConfig,
        count: usize,
        master_seed: u64,
    ) -> Result<Dataset> {
        config.validate()?;
        if count == 0 {
            return Err(Error::ConfigInfeasible("record count must be positive".into()));
        }
        let images_dir = dir.join("images");
        fs::create_dir_all(&images_dir).map_err(|e| Error::io(images_dir.display().to_string(), e))?;

        let mut digests = Vec::with_capacity(count);
        let mut labels_text = String::new();
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let rec = generate_scene(record_seed(master_seed, i), config)?;
            let bytes = encode_image(&rec.image);
            let path = Self::image_path(dir, i);
            fs::write(&path, &bytes).map_err(|e| Error::io(path.display().to_string(), e))?;
            digests.push(sha256_hex(&bytes));
            labels_text.push_str(&format_label_line(i, &rec));
            labels.push(LabelLine {
                seed: rec.seed,
                faces: rec.faces,
            });
        }
        let labels_path = dir.join("labels");
        fs::write(&labels_path, labels_text)
            .map_err(|e| Error::io(labels_path.display().to_string(), e))?;

        let train_end = count * 8 / 10;
        let val_end = count * 9 / 10;
        let manifest = DatasetManifest {
            version: FORMAT_VERSION,
            records: count,
            attr_count: config.attr_count,
            channels: 1,
            height: config.image_h,
            width: config.image_w,
            master_seed,
            style: config.style,
            config_hash: sha256_hex(gen_config_canonical(config, master_seed, count).as_bytes()),
            splits: vec![
                (Split::Train, 0, train_end),
                (Split::Val, train_end, val_end),
                (Split::Test, val_end, count),
            ],
            digests,
        };
        write_manifest(dir, &manifest)?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            labels,
        })
    }

    pub fn open(dir: &Path) -> Result<Dataset> {
        if !dir.join("manifest").exists() {
            return Err(Error::DatasetMissing(dir.display().to_string()));
        }
        let manifest = read_manifest(dir)?;
        let labels_path = dir.join("labels");
        let text = fs::read_to_string(&labels_path)
            .map_err(|e| Error::io(labels_path.display().to_string(), e))?;
        let mut labels = Vec::with_capacity(manifest.records);
        for (i, line) in text.lines().enumerate() {
            labels.push(parse_label_line(i, line, manifest.attr_count)?);
        }
        if labels.len() != manifest.records {
            return Err(Error::CorruptManifest(format!(
                "manifest claims {} records but labels has {}",
                manifest.records,
                labels.len()
            )));
        }
        if manifest.digests.len() != manifest.records {
            return Err(Error::CorruptManifest(format!(
                "manifest lists {} digests for {} records",
                manifest.digests.len(),
                manifest.records
            )));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            labels,
        })
    }

    /// Loads one record, verifying the stored image digest.
    pub fn read_record(&self, index: usize) -> Result<SceneRecord> {
        let path = Self::image_path(&self.dir, index);
        let bytes = fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if sha256_hex(&bytes) != self.manifest.digests[index] {
            return Err(Error::ChecksumMismatch(path.display().to_string()));
        }
        let image = decode_image(&bytes, &path)?;
        let line = &self.labels[index];
        Ok(SceneRecord {
            image,
            faces: line.faces.clone(),
            seed: line.seed,
        })
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.manifest.split_range(split).collect()
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            image_h: self.manifest.height,
            image_w: self.manifest.width,
            attr_count: self.manifest.attr_count,
            style: self.manifest.style,
            ..GenConfig::default()
        }
    }
}

fn encode_image(image: &Tensor) -> Vec<u8> {
    let shape = image.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut bytes = Vec::with_capacity(20 + 4 * c * h * w);
    bytes.extend_from_slice(IMAGE_MAGIC);
    for v in [FORMAT_VERSION, c as u32, h as u32, w as u32] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &px in image.data().iter() {
        bytes.extend_from_slice(&(px as f32).to_le_bytes());
    }
    bytes
}

fn decode_image(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let fail = |msg: &str| Error::ChecksumMismatch(format!("{}: {msg}", path.display()));
    if bytes.len() < 20 || &bytes[0..4] != IMAGE_MAGIC {
        return Err(fail("bad image header"));
    }
    let u32_at = |off: usize| {
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&bytes[off..off + 4]);
        u32::from_le_bytes(buf)
    };
    let (version, c, h, w) = (u32_at(4), u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    if version != FORMAT_VERSION {
        return Err(fail("unsupported image format version"));
    }
    let expect = 20 + 4 * c * h * w;
    if bytes.len() != expect {
        return Err(fail("truncated image payload"));
    }
    let mut data = Vec::with_capacity(c * h * w);
    let mut cursor = &bytes[20..];
    let mut buf = [0u8; 4];
    while cursor.read_exact(&mut buf).is_ok() {
        data.push(f32::from_le_bytes(buf) as f64);
    }
    Tensor::from_vec(data, &[c, h, w])
}

fn format_label_line(index: usize, rec: &SceneRecord) -> String {
    let mut s = String::new();
    let _ = write!(s, "{index} {} {}", rec.seed, rec.faces.len());
    for f in &rec.faces {
        let _ = write!(s, " box {} {} {} {}", f.bbox.x1, f.bbox.y1, f.bbox.x2, f.bbox.y2);
        let _ = write!(s, " lm");
        for &(x, y) in &f.landmarks {
            let _ = write!(s, " {x} {y}");
        }
        let _ = write!(s, " attrs");
        for &a in &f.attributes {
            let _ = write!(s, " {a}");
        }
    }
    s.push('\n');
    s
}

fn parse_label_line(index: usize, line: &str, attr_count: usize) -> Result<LabelLine> {
    let corrupt = |msg: &str| Error::CorruptManifest(format!("labels line {index}: {msg}"));
    let tokens: Vec<&str> = line.split_ascii_whitespace().collect();
    let mut pos = 0usize;
    let mut next = |tokens: &[&str]| -> Result<String> {
        let t = tokens.get(pos).ok_or_else(|| corrupt("line too short"))?;
        pos += 1;
        Ok(t.to_string())
    };

    let id: usize = next(&tokens)?.parse().map_err(|_| corrupt("bad id"))?;
    if id != index {
        return Err(corrupt("record id out of order"));
    }
    let seed: u64 = next(&tokens)?.parse().map_err(|_| corrupt("bad seed"))?;
    let count: usize = next(&tokens)?.parse().map_err(|_| corrupt("bad face count"))?;
    let mut faces = Vec::with_capacity(count);
    for _ in 0..count {
        if next(&tokens)? != "box" {
            return Err(corrupt("expected box tag"));
        }
        let mut fv = [0.0f64; 14];
        for v in fv.iter_mut().take(4) {
            *v = next(&tokens)?.parse().map_err(|_| corrupt("bad box float"))?;
        }
        let bbox = BBox {
            x1: fv[0],
            y1: fv[1],
            x2: fv[2],
            y2: fv[3],
        };
        if next(&tokens)? != "lm" {
            return Err(corrupt("expected lm tag"));
        }
        for v in fv.iter_mut().skip(4) {
            *v = next(&tokens)?.parse().map_err(|_| corrupt("bad landmark float"))?;
        }
        let mut landmarks = [(0.0, 0.0); 5];
        for (i, point) in landmarks.iter_mut().enumerate() {
            *point = (fv[4 + 2 * i], fv[5 + 2 * i]);
        }
        if next(&tokens)? != "attrs" {
            return Err(corrupt("expected attrs tag"));
        }
        let mut attributes = Vec::with_capacity(attr_count);
        for _ in 0..attr_count {
            let v: i8 = next(&tokens)?.parse().map_err(|_| corrupt("bad attr"))?;
            if v != 1 && v != -1 {
                return Err(corrupt("attr must be +1 or -1"));
            }
            attributes.push(v);
        }
        faces.push(FaceAnnotation {
            bbox,
            landmarks,
            attributes,
        });
    }
    Ok(LabelLine { seed, faces })
}

fn write_manifest(dir: &Path, m: &DatasetManifest) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{MANIFEST_MAGIC} {}", m.version);
    let _ = writeln!(s, "records {}", m.records);
    let _ = writeln!(s, "attributes {}", m.attr_count);
    let _ = writeln!(s, "channels {}", m.channels);
    let _ = writeln!(s, "height {}", m.height);
    let _ = writeln!(s, "width {}", m.width);
    let _ = writeln!(s, "master_seed {}", m.master_seed);
    let _ = writeln!(s, "style {}", m.style.as_str());
    let _ = writeln!(s, "config_hash {}", m.config_hash);
    for (split, a, b) in &m.splits {
        let _ = writeln!(s, "split {} {a} {b}", split.as_str());
    }
    for (i, d) in m.digests.iter().enumerate() {
        let _ = writeln!(s, "digest {i} {d}");
    }
    let _ = writeln!(s, "end");
    let path = dir.join("manifest");
    let mut file = fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(s.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let corrupt = |msg: &str| Error::CorruptManifest(msg.to_string());
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| corrupt("empty manifest"))?;
    let mut head = header.split_ascii_whitespace();
    if head.next() != Some(MANIFEST_MAGIC) {
        return Err(corrupt("bad manifest magic"));
    }
    let version: u32 = head
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt("bad manifest version"))?;
    if version != FORMAT_VERSION {
        return Err(corrupt("unsupported manifest version"));
    }

    let mut records = None;
    let mut attr_count = None;
    let mut channels = None;
    let mut height = None;
    let mut width = None;
    let mut master_seed = None;
    let mut style = None;
    let mut config_hash = None;
    let mut splits = Vec::new();
    let mut digests: Vec<(usize, String)> = Vec::new();
    let mut terminated = false;
    for line in lines {
        let mut tok = line.split_ascii_whitespace();
        match tok.next() {
            Some("records") => records = tok.next().and_then(|v| v.parse().ok()),
            Some("attributes") => attr_count = tok.next().and_then(|v| v.parse().ok()),
            Some("channels") => channels = tok.next().and_then(|v| v.parse().ok()),
            Some("height") => height = tok.next().and_then(|v| v.parse().ok()),
            Some("width") => width = tok.next().and_then(|v| v.parse().ok()),
            Some("master_seed") => master_seed = tok.next().and_then(|v| v.parse().ok()),
            Some("style") => style = tok.next().and_then(|v| GlyphStyle::parse(v).ok()),
            Some("config_hash") => config_hash = tok.next().map(|v| v.to_string()),
            Some("split") => {
                let name = tok.next().ok_or_else(|| corrupt("split missing name"))?;
                let a: usize = tok
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| corrupt("split missing start"))?;
                let b: usize = tok
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| corrupt("split missing end"))?;
                splits.push((Split::parse(name)?, a, b));
            }
            Some("digest") => {
                let i: usize = tok
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| corrupt("digest missing index"))?;
                let d = tok.next().ok_or_else(|| corrupt("digest missing hash"))?;
                digests.push((i, d.to_string()));
            }
            Some("end") => {
                terminated = true;
                break;
            }
            Some(other) => return Err(corrupt(&format!("unknown manifest key {other:?}"))),
            None => {}
        }
    }
    if !terminated {
        return Err(corrupt("manifest missing end marker"));
    }
    let records = records.ok_or_else(|| corrupt("manifest missing records"))?;
    digests.sort_by_key(|(i, _)| *i);
    if digests.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(corrupt("digest indices are not dense"));
    }
    Ok(DatasetManifest {
        version,
        records,
        attr_count: attr_count.ok_or_else(|| corrupt("manifest missing attributes"))?,
        channels: channels.ok_or_else(|| corrupt("manifest missing channels"))?,
        height: height.ok_or_else(|| corrupt("manifest missing height"))?,
        width: width.ok_or_else(|| corrupt("manifest missing width"))?,
        master_seed: master_seed.ok_or_else(|| corrupt("manifest missing master_seed"))?,
        style: style.ok_or_else(|| corrupt("manifest missing style"))?,
        config_hash: config_hash.ok_or_else(|| corrupt("manifest missing config_hash"))?,
        splits,
        digests: digests.into_iter().map(|(_, d)| d).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn small_config() -> GenConfig {
        GenConfig {
            faces_min: 0,
            faces_max: 2,
            ..GenConfig::default()
        }
    }

    #[test]
    fn write_then_read_is_bit_identical() {
        let dir = TempDir::new().unwrap();
        let cfg = small_config();
        let ds = Dataset::generate(dir.path(), &cfg, 100, 7).unwrap();
        let reopened = Dataset::open(dir.path()).unwrap();
        assert_eq!(reopened.len(), 100);
        for i in 0..100 {
            let orig = generate_scene(record_seed(7, i), &cfg).unwrap();
            let read = reopened.read_record(i).unwrap();
            let bits = |t: &Tensor| t.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&orig.image), bits(&read.image), "record {i}");
            assert_eq!(orig.faces.len(), read.faces.len());
            for (a, b) in orig.faces.iter().zip(read.faces.iter()) {
                assert_eq!(a.bbox.x1.to_bits(), b.bbox.x1.to_bits());
                assert_eq!(a.landmarks, b.landmarks);
                assert_eq!(a.attributes, b.attributes);
            }
        }
        drop(ds);
    }

    #[test]
    fn truncated_image_is_a_checksum_mismatch() {
        let dir = TempDir::new().unwrap();
        Dataset::generate(dir.path(), &small_config(), 5, 1).unwrap();
        let path = Dataset::image_path(dir.path(), 2);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(matches!(
            ds.read_record(2),
            Err(Error::ChecksumMismatch(_))
        ));
        assert!(ds.read_record(1).is_ok());
    }

    #[test]
    fn record_count_mismatch_is_corrupt() {
        let dir = TempDir::new().unwrap();
        Dataset::generate(dir.path(), &small_config(), 5, 1).unwrap();
        let manifest = fs::read_to_string(dir.path().join("manifest")).unwrap();
        fs::write(
            dir.path().join("manifest"),
            manifest.replace("records 5", "records 6"),
        )
        .unwrap();
        assert!(matches!(
            Dataset::open(dir.path()),
            Err(Error::CorruptManifest(_))
        ));
    }

    #[test]
    fn missing_dataset_is_reported() {
        let dir = TempDir::new().unwrap();
        assert!(matches!(
            Dataset::open(&dir.path().join("nope")),
            Err(Error::DatasetMissing(_))
        ));
    }

    #[test]
    fn splits_are_80_10_10_by_index() {
        let dir = TempDir::new().unwrap();
        let ds = Dataset::generate(dir.path(), &small_config(), 50, 3).unwrap();
        assert_eq!(ds.split_indices(Split::Train), (0..40).collect::<Vec<_>>());
        assert_eq!(ds.split_indices(Split::Val), (40..45).collect::<Vec<_>>());
        assert_eq!(ds.split_indices(Split::Test), (45..50).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_a_pure_function_of_seed_and_config() {
        let d1 = TempDir::new().unwrap();
        let d2 = TempDir::new().unwrap();
        let a = Dataset::generate(d1.path(), &small_config(), 20, 11).unwrap();
        let b = Dataset::generate(d2.path(), &small_config(), 20, 11).unwrap();
        assert_eq!(a.manifest.config_hash, b.manifest.config_hash);
        assert_eq!(a.manifest.digests, b.manifest.digests);
        let ma = fs::read(d1.path().join("manifest")).unwrap();
        let mb = fs::read(d2.path().join("manifest")).unwrap();
        assert_eq!(ma, mb);
    }
}
