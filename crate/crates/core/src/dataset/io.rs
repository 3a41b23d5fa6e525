//! Motion container (binary), its CSV twin, and the corpus manifest.
//!
//! Binary layout, little endian:
//!
//! ```text
//! magic "RGMOTION" | version u16 | fps f64 | skeleton hash [16] | joints u32
//! provenance u8 | id (u16 len + utf8) | label flag u8
//! [label: x y z f64 | target frame u32 | joint (u16 len + utf8)]
//! frames u32 | frames × (3 + 6 + 6J) f64
//! ```

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::preprocess::DatasetSplit;
use super::sequence::{MotionSequence, Provenance};
use crate::body::Pose;
use crate::error::{Error, Result};
use crate::intention::GoalSpec;

const MAGIC: &[u8; 8] = b"RGMOTION";
pub const MOTION_VERSION: u16 = 1;

/// A decoded motion file.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFile {
    pub sequence: MotionSequence,
    pub skeleton_hash: String,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u16).to_le_bytes());
    out.extend(s.as_bytes());
}

pub fn encode_motion(seq: &MotionSequence, skeleton_hash: &str) -> Vec<u8> {
    let joints = seq.poses.first().map_or(0, Pose::joint_count);
    let mut out = Vec::with_capacity(64 + seq.len() * (9 + 6 * joints) * 8);
    out.extend(MAGIC);
    out.extend(MOTION_VERSION.to_le_bytes());
    out.extend(seq.fps.to_le_bytes());
    let mut hash = [b'0'; 16];
    for (h, b) in hash.iter_mut().zip(skeleton_hash.bytes()) {
        *h = b;
    }
    out.extend(hash);
    out.extend((joints as u32).to_le_bytes());
    out.push(seq.provenance.code());
    put_str(&mut out, &seq.id);
    match &seq.label {
        None => out.push(0),
        Some(l) => {
            out.push(1);
            for v in l.position.iter() {
                out.extend(v.to_le_bytes());
            }
            out.extend((l.target_frame as u32).to_le_bytes());
            put_str(&mut out, &l.target_joint);
        }
    }
    out.extend((seq.len() as u32).to_le_bytes());
    for pose in &seq.poses {
        for v in pose.to_vec() {
            out.extend(v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::CorruptFile(format!("motion file truncated at byte {}", self.at)));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptFile("invalid utf-8 in motion file".into()))
    }
}

pub fn decode_motion(bytes: &[u8]) -> Result<MotionFile> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::CorruptFile("not a motion file".into()));
    }
    let version = r.u16()?;
    if version != MOTION_VERSION {
        return Err(Error::VersionMismatch {
            found: version as u32,
            supported: MOTION_VERSION as u32,
        });
    }
    let fps = r.f64()?;
    let skeleton_hash = String::from_utf8(r.take(16)?.to_vec()).map_err(|_| Error::CorruptFile("invalid skeleton hash".into()))?;
    let joints = r.u32()? as usize;
    let provenance = Provenance::from_code(r.u8()?).ok_or_else(|| Error::CorruptFile("unknown provenance".into()))?;
    let id = r.string()?;
    let label = match r.u8()? {
        0 => None,
        1 => {
            let position = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
            let target_frame = r.u32()? as usize;
            Some(GoalSpec::new(position, target_frame).for_joint(r.string()?))
        }
        _ => return Err(Error::CorruptFile("bad label flag".into())),
    };
    let frames = r.u32()? as usize;
    let width = 9 + 6 * joints;
    let mut poses = Vec::with_capacity(frames);
    let mut row = vec![0.0; width];
    for _ in 0..frames {
        for v in row.iter_mut() {
            *v = r.f64()?;
        }
        poses.push(Pose::from_slice(&row, joints)?);
    }
    if r.at != bytes.len() {
        return Err(Error::CorruptFile("trailing bytes after motion frames".into()));
    }
    Ok(MotionFile {
        sequence: MotionSequence {
            id,
            fps,
            poses,
            label,
            provenance,
        },
        skeleton_hash,
    })
}

pub fn write_motion(path: &Path, seq: &MotionSequence, skeleton_hash: &str) -> Result<()> {
    fs::write(path, encode_motion(seq, skeleton_hash)).map_err(|e| Error::io(path, e))
}

pub fn read_motion(path: &Path) -> Result<MotionFile> {
    decode_motion(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Lossless text twin: `#` metadata lines, a column header, then one row per
/// frame. Floats use the shortest round-trip formatting.
pub fn motion_to_csv(seq: &MotionSequence, skeleton_hash: &str) -> String {
    use std::fmt::Write;
    let joints = seq.poses.first().map_or(0, Pose::joint_count);
    let mut s = String::new();
    let _ = writeln!(s, "# version={MOTION_VERSION}");
    let _ = writeln!(s, "# id={}", seq.id);
    let _ = writeln!(s, "# fps={}", seq.fps);
    let _ = writeln!(s, "# skeleton={skeleton_hash}");
    let _ = writeln!(s, "# provenance={}", seq.provenance.as_str());
    if let Some(l) = &seq.label {
        let p = l.position;
        let _ = writeln!(s, "# label={},{},{},{},{}", p.x, p.y, p.z, l.target_frame, l.target_joint);
    }
    let mut cols = vec!["tx".to_string(), "ty".into(), "tz".into()];
    cols.extend((0..6).map(|k| format!("r{k}")));
    for j in 0..joints {
        cols.extend((0..6).map(|k| format!("j{j}_{k}")));
    }
    let _ = writeln!(s, "{}", cols.join(","));
    for pose in &seq.poses {
        let row: Vec<String> = pose.to_vec().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn motion_from_csv(text: &str) -> Result<MotionFile> {
    let bad = |m: &str| Error::Parse(format!("motion csv: {m}"));
    let mut meta = std::collections::BTreeMap::new();
    let mut lines = text.lines();
    let mut header = None;
    for line in lines.by_ref() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest.split_once('=').ok_or_else(|| bad("metadata line without '='"))?;
            meta.insert(k.to_string(), v.to_string());
        } else {
            header = Some(line);
            break;
        }
    }
    let width = header.ok_or_else(|| bad("missing header"))?.split(',').count();
    if width < 9 || (width - 9) % 6 != 0 {
        return Err(bad("column count"));
    }
    let joints = (width - 9) / 6;
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(&format!("missing {k}")));
    let version: u16 = get("version")?.parse().map_err(|_| bad("version"))?;
    if version != MOTION_VERSION {
        return Err(Error::VersionMismatch {
            found: version as u32,
            supported: MOTION_VERSION as u32,
        });
    }
    let provenance = match get("provenance")?.as_str() {
        "locomotion" => Provenance::Locomotion,
        "reaching" => Provenance::Reaching,
        "generated" => Provenance::Generated,
        _ => return Err(bad("provenance")),
    };
    let label = match meta.get("label") {
        None => None,
        Some(l) => {
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != 5 {
                return Err(bad("label"));
            }
            let f = |i: usize| parts[i].parse::<f64>().map_err(|_| bad("label"));
            let frame = parts[3].parse::<usize>().map_err(|_| bad("label frame"))?;
            Some(GoalSpec::new(Vector3::new(f(0)?, f(1)?, f(2)?), frame).for_joint(parts[4]))
        }
    };
    let mut poses = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| bad("number")))
            .collect::<Result<Vec<f64>>>()?;
        poses.push(Pose::from_slice(&row, joints)?);
    }
    Ok(MotionFile {
        sequence: MotionSequence {
            id: get("id")?,
            fps: get("fps")?.parse().map_err(|_| bad("fps"))?,
            poses,
            label,
            provenance,
        },
        skeleton_hash: get("skeleton")?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub provenance: Provenance,
    pub frames: usize,
    pub labeled: bool,
    pub split: String,
    pub file: String,
}

/// JSON index of a corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub skeleton_hash: String,
    pub fps: f64,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn new(skeleton_hash: &str, fps: f64, seed: u64, sequences: &[MotionSequence], split: &DatasetSplit) -> Self {
        let entries = sequences
            .iter()
            .map(|s| ManifestEntry {
                id: s.id.clone(),
                provenance: s.provenance,
                frames: s.len(),
                labeled: s.label.is_some(),
                split: split.part_of(&s.id).unwrap_or("none").to_string(),
                file: format!("{}.motion", s.id),
            })
            .collect();
        Self {
            version: 1,
            skeleton_hash: skeleton_hash.to_string(),
            fps,
            seed,
            entries,
        }
    }

    pub fn split(&self) -> DatasetSplit {
        let pick = |part: &str| self.entries.iter().filter(|e| e.split == part).map(|e| e.id.clone()).collect();
        DatasetSplit {
            train: pick("train"),
            val: pick("val"),
            test: pick("test"),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Writes every sequence (binary and CSV twin) plus `manifest.json` into `dir`.
pub fn save_corpus(dir: &Path, sequences: &[MotionSequence], manifest: &CorpusManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (seq, entry) in sequences.iter().zip(&manifest.entries) {
        write_motion(&dir.join(&entry.file), seq, &manifest.skeleton_hash)?;
        let csv = dir.join(format!("{}.csv", seq.id));
        fs::write(&csv, motion_to_csv(seq, &manifest.skeleton_hash)).map_err(|e| Error::io(&csv, e))?;
    }
    manifest.save(&dir.join("manifest.json"))
}

/// Reads a corpus directory written by [`save_corpus`].
pub fn load_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<MotionSequence>)> {
    let manifest = CorpusManifest::load(&dir.join("manifest.json"))?;
    let mut sequences = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let file = read_motion(&dir.join(&entry.file))?;
        if file.skeleton_hash != manifest.skeleton_hash {
            return Err(Error::SkeletonMismatch {
                expected: manifest.skeleton_hash.clone(),
                got: file.skeleton_hash,
            });
        }
        sequences.push(file.sequence);
    }
    Ok((manifest, sequences))
}
