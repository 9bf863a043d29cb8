//! On-disk corpus layout and the text/binary formats of every artifact.
//!
//! All text files are UTF-8, one record per line, tab separated, with floats
//! written in shortest round-trip form. Flow maps are `FLM1` binaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::classifier::ActionModel;
use crate::error::{Error, Result};
use crate::geometry::Bbox;
use crate::linker::ActionTube;
use crate::saliency::FlowMagnitudeMap;

pub const ACTIONS_FILE: &str = "actions.txt";
pub const PROPOSALS_FILE: &str = "proposals.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const GROUNDTRUTH_FILE: &str = "groundtruth.tsv";
pub const FLOW_DIR: &str = "flow";
pub const MODELS_FILE: &str = "models.tsv";
pub const TUBES_FILE: &str = "tubes.tsv";

const FLOW_MAGIC: &[u8; 4] = b"FLM1";

#[derive(Debug, Clone, PartialEq)]
pub struct RegionProposal {
    pub video_id: String,
    pub frame: u32,
    pub region_id: u32,
    pub bbox: Bbox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub video_id: String,
    pub frame: u32,
    pub region_id: u32,
    pub phi_s: Vec<f64>,
    pub phi_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    pub video_id: String,
    pub track_id: u32,
    pub action: String,
    pub boxes: Vec<(u32, Bbox)>,
}

impl GroundTruthTrack {
    pub fn box_at(&self, frame: u32) -> Option<&Bbox> {
        self.boxes.iter().find(|(f, _)| *f == frame).map(|(_, b)| b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub proposals: Vec<RegionProposal>,
    pub flow: FlowMagnitudeMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    pub frames: Vec<Frame>,
}

impl Video {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }
}

/// `(video_id, frame, region_id)`
pub type RegionKey = (String, u32, u32);

/// A fully validated corpus. Videos keep the order in which they first
/// appear in `proposals.tsv`; frames are dense `0..T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub actions: Vec<String>,
    pub videos: Vec<Video>,
    pub features: BTreeMap<RegionKey, FeatureRecord>,
    pub tracks: Vec<GroundTruthTrack>,
}

impl Corpus {
    pub fn video(&self, id: &str) -> Option<&Video> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn action_index(&self, action: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }

    pub fn feature(&self, video_id: &str, frame: u32, region_id: u32) -> Option<&FeatureRecord> {
        self.features
            .get(&(video_id.to_string(), frame, region_id))
    }

    /// `(Ds, Dm)` shared by every feature record, if there are any.
    pub fn feature_dims(&self) -> Option<(usize, usize)> {
        self.features
            .values()
            .next()
            .map(|f| (f.phi_s.len(), f.phi_m.len()))
    }

    pub fn tracks_for_video<'a>(
        &'a self,
        video_id: &'a str,
    ) -> impl Iterator<Item = &'a GroundTruthTrack> + 'a {
        self.tracks.iter().filter(move |t| t.video_id == video_id)
    }

    /// Label of a video: the action of its lowest-numbered ground-truth track.
    pub fn video_label(&self, video_id: &str) -> Option<&str> {
        self.tracks
            .iter()
            .filter(|t| t.video_id == video_id)
            .min_by_key(|t| t.track_id)
            .map(|t| t.action.as_str())
    }

    pub fn all_proposals(&self) -> impl Iterator<Item = &RegionProposal> {
        self.videos
            .iter()
            .flat_map(|v| v.frames.iter().flat_map(|f| f.proposals.iter()))
    }
}

// ---------------------------------------------------------------------------
// Field parsing

fn fmt_f64(out: &mut String, x: f64) {
    write!(out, "{x}").unwrap();
}

struct Fields<'a> {
    path: &'a Path,
    line: usize,
    parts: std::str::Split<'a, char>,
}

impl<'a> Fields<'a> {
    fn new(path: &'a Path, line: usize, text: &'a str) -> Self {
        Self {
            path,
            line,
            parts: text.split('\t'),
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        match self.parts.next() {
            Some(s) if !s.is_empty() => Ok(s),
            Some(_) => Err(self.err(format!("empty {what} field"))),
            None => Err(self.err(format!("missing {what} field"))),
        }
    }

    fn uint(&mut self, what: &str) -> Result<u32> {
        let s = self.text(what)?;
        s.parse()
            .map_err(|_| self.err(format!("{what} '{s}' is not a non-negative integer")))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let s = self.text(what)?;
        s.parse()
            .map_err(|_| self.err(format!("{what} '{s}' is not a non-negative integer")))
    }

    fn real(&mut self, what: &str) -> Result<f64> {
        let s = self.text(what)?;
        match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            Ok(_) => Err(self.err(format!("{what} '{s}' is not finite"))),
            Err(_) => Err(self.err(format!("{what} '{s}' is not a number"))),
        }
    }

    fn reals(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.real(what)).collect()
    }

    fn bbox(&mut self) -> Result<Bbox> {
        let x1 = self.real("x1")?;
        let y1 = self.real("y1")?;
        let x2 = self.real("x2")?;
        let y2 = self.real("y2")?;
        Bbox::new(x1, y1, x2, y2).map_err(|e| self.err(e.to_string()))
    }

    fn finish(mut self) -> Result<()> {
        match self.parts.next() {
            None => Ok(()),
            Some(_) => Err(self.err("unexpected extra fields")),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l))
}

fn check_label(label: &str, what: &str) -> Result<()> {
    if label.is_empty() || label.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!("{what} '{label}' must be non-empty without tabs or newlines")));
    }
    Ok(())
}

/// Write `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Actions

pub fn parse_actions(path: &Path, text: &str) -> Result<Vec<String>> {
    let mut actions = Vec::new();
    let mut seen = HashSet::new();
    for (line, label) in records(text) {
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        check_label(label, "action").map_err(|e| err(e.to_string()))?;
        if !seen.insert(label) {
            return Err(err(format!("duplicate action '{label}'")));
        }
        actions.push(label.to_string());
    }
    Ok(actions)
}

pub fn format_actions(actions: &[String]) -> String {
    actions.iter().map(|a| format!("{a}\n")).collect()
}

// ---------------------------------------------------------------------------
// Proposals

pub fn parse_proposals(path: &Path, text: &str) -> Result<Vec<RegionProposal>> {
    records(text)
        .map(|(line, l)| {
            let mut f = Fields::new(path, line, l);
            let video_id = f.text("video_id")?.to_string();
            let frame = f.uint("frame")?;
            let region_id = f.uint("region_id")?;
            let bbox = f.bbox()?;
            f.finish()?;
            Ok(RegionProposal {
                video_id,
                frame,
                region_id,
                bbox,
            })
        })
        .collect()
}

pub fn format_proposals<'a>(proposals: impl IntoIterator<Item = &'a RegionProposal>) -> String {
    let mut out = String::new();
    for p in proposals {
        write!(out, "{}\t{}\t{}", p.video_id, p.frame, p.region_id).unwrap();
        for c in p.bbox.to_array() {
            out.push('\t');
            fmt_f64(&mut out, c);
        }
        out.push('\n');
    }
    out
}

pub fn read_proposals(path: &Path) -> Result<Vec<RegionProposal>> {
    parse_proposals(path, &read_text(path)?)
}

pub fn write_proposals(proposals: &[RegionProposal], path: &Path) -> Result<()> {
    write_atomic(path, format_proposals(proposals).as_bytes())
}

// ---------------------------------------------------------------------------
// Features

pub fn parse_features(path: &Path, text: &str) -> Result<Vec<FeatureRecord>> {
    records(text)
        .map(|(line, l)| {
            let mut f = Fields::new(path, line, l);
            let video_id = f.text("video_id")?.to_string();
            let frame = f.uint("frame")?;
            let region_id = f.uint("region_id")?;
            let ds = f.count("Ds")?;
            let dm = f.count("Dm")?;
            let phi_s = f.reals(ds, "phi_s")?;
            let phi_m = f.reals(dm, "phi_m")?;
            f.finish()?;
            Ok(FeatureRecord {
                video_id,
                frame,
                region_id,
                phi_s,
                phi_m,
            })
        })
        .collect()
}

pub fn format_features<'a>(records: impl IntoIterator<Item = &'a FeatureRecord>) -> String {
    let mut out = String::new();
    for r in records {
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.video_id,
            r.frame,
            r.region_id,
            r.phi_s.len(),
            r.phi_m.len()
        )
        .unwrap();
        for &x in r.phi_s.iter().chain(&r.phi_m) {
            out.push('\t');
            fmt_f64(&mut out, x);
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Ground truth

pub fn parse_groundtruth(path: &Path, text: &str) -> Result<Vec<GroundTruthTrack>> {
    let mut tracks: Vec<GroundTruthTrack> = Vec::new();
    let mut index: HashMap<(String, u32), usize> = HashMap::new();
    for (line, l) in records(text) {
        let mut f = Fields::new(path, line, l);
        let video_id = f.text("video_id")?.to_string();
        let track_id = f.uint("track_id")?;
        let action = f.text("action")?.to_string();
        let frame = f.uint("frame")?;
        let bbox = f.bbox()?;
        f.finish()?;
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let slot = *index
            .entry((video_id.clone(), track_id))
            .or_insert_with(|| {
                tracks.push(GroundTruthTrack {
                    video_id,
                    track_id,
                    action: action.clone(),
                    boxes: Vec::new(),
                });
                tracks.len() - 1
            });
        let track = &mut tracks[slot];
        if track.action != action {
            return Err(err(format!(
                "track {track_id} changes action from '{}' to '{action}'",
                track.action
            )));
        }
        if track.box_at(frame).is_some() {
            return Err(err(format!("track {track_id} has two boxes at frame {frame}")));
        }
        track.boxes.push((frame, bbox));
    }
    Ok(tracks)
}

pub fn format_groundtruth<'a>(tracks: impl IntoIterator<Item = &'a GroundTruthTrack>) -> String {
    let mut out = String::new();
    for t in tracks {
        for (frame, b) in &t.boxes {
            write!(out, "{}\t{}\t{}\t{}", t.video_id, t.track_id, t.action, frame).unwrap();
            for c in b.to_array() {
                out.push('\t');
                fmt_f64(&mut out, c);
            }
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Flow maps

pub fn flow_path(root: &Path, video_id: &str, frame: u32) -> PathBuf {
    root.join(FLOW_DIR).join(video_id).join(format!("{frame}.flm"))
}

pub fn encode_flow(map: &FlowMagnitudeMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * map.values().len());
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(path: &Path, bytes: &[u8]) -> Result<FlowMagnitudeMap> {
    let err = |reason: String| Error::Load {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 12 {
        return Err(err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != FLOW_MAGIC {
        return Err(err("bad magic, expected FLM1".into()));
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let n = width as u64 * height as u64;
    let body = &bytes[12..];
    if body.len() as u64 != 4 * n {
        return Err(err(format!(
            "{width}x{height} map needs {} payload bytes, found {} (offset 12)",
            4 * n,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FlowMagnitudeMap::new(width, height, values).map_err(|e| err(e.to_string()))
}

pub fn read_flow(path: &Path) -> Result<FlowMagnitudeMap> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(path, &bytes)
}

pub fn write_flow(map: &FlowMagnitudeMap, path: &Path) -> Result<()> {
    write_atomic(path, &encode_flow(map))
}

// ---------------------------------------------------------------------------
// Corpus

/// Load and cross-validate a corpus rooted at `root`.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let actions_path = root.join(ACTIONS_FILE);
    let actions = parse_actions(&actions_path, &read_text(&actions_path)?)?;

    let proposals_path = root.join(PROPOSALS_FILE);
    let proposals = parse_proposals(&proposals_path, &read_text(&proposals_path)?)?;

    // Group proposals by video (first-appearance order) and frame.
    let mut video_order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, BTreeMap<u32, Vec<RegionProposal>>> = HashMap::new();
    let mut seen_regions: HashSet<(String, u32, u32)> = HashSet::new();
    for (i, p) in proposals.into_iter().enumerate() {
        if !seen_regions.insert((p.video_id.clone(), p.frame, p.region_id)) {
            return Err(Error::Parse {
                path: proposals_path.clone(),
                line: i + 1,
                reason: format!(
                    "duplicate region_id {} in video '{}' frame {}",
                    p.region_id, p.video_id, p.frame
                ),
            });
        }
        if !grouped.contains_key(&p.video_id) {
            video_order.push(p.video_id.clone());
        }
        grouped
            .entry(p.video_id.clone())
            .or_default()
            .entry(p.frame)
            .or_default()
            .push(p);
    }

    let mut videos = Vec::with_capacity(video_order.len());
    for id in video_order {
        let by_frame = grouped.remove(&id).unwrap();
        let num_frames = by_frame.keys().next_back().map_or(0, |f| f + 1);
        if by_frame.len() as u32 != num_frames {
            let missing = (0..num_frames).find(|f| !by_frame.contains_key(f)).unwrap();
            return Err(Error::Load {
                path: proposals_path.clone(),
                reason: format!("video '{id}' has no proposals at frame {missing}; frames must be dense"),
            });
        }
        let mut frames = Vec::with_capacity(by_frame.len());
        for (frame, proposals) in by_frame {
            let flow = read_flow(&flow_path(root, &id, frame))?;
            frames.push(Frame { proposals, flow });
        }
        videos.push(Video { id, frames });
    }

    let features_path = root.join(FEATURES_FILE);
    let feature_records = parse_features(&features_path, &read_text(&features_path)?)?;
    let mut features = BTreeMap::new();
    let mut dims: Option<(usize, usize)> = None;
    for (i, r) in feature_records.into_iter().enumerate() {
        let line = i + 1;
        let err = |reason: String| Error::Parse {
            path: features_path.clone(),
            line,
            reason,
        };
        let d = (r.phi_s.len(), r.phi_m.len());
        match dims {
            None => dims = Some(d),
            Some(expected) if expected != d => {
                return Err(err(format!(
                    "feature dimensions {d:?} differ from earlier records {expected:?}"
                )))
            }
            _ => {}
        }
        let key = (r.video_id.clone(), r.frame, r.region_id);
        if !seen_regions.contains(&key) {
            return Err(err(format!(
                "feature references unknown region {} in video '{}' frame {}",
                r.region_id, r.video_id, r.frame
            )));
        }
        if features.insert(key, r).is_some() {
            return Err(err("duplicate feature record".into()));
        }
    }

    let gt_path = root.join(GROUNDTRUTH_FILE);
    let tracks = parse_groundtruth(&gt_path, &read_text(&gt_path)?)?;
    for t in &tracks {
        let err = |reason: String| Error::Load {
            path: gt_path.clone(),
            reason,
        };
        if !actions.contains(&t.action) {
            return Err(err(format!(
                "track {} of video '{}' uses action '{}' outside actions.txt",
                t.track_id, t.video_id, t.action
            )));
        }
        let Some(video) = videos.iter().find(|v| v.id == t.video_id) else {
            return Err(err(format!("track {} references unknown video '{}'", t.track_id, t.video_id)));
        };
        if let Some((f, _)) = t.boxes.iter().find(|(f, _)| *f as usize >= video.num_frames()) {
            return Err(err(format!(
                "track {} of video '{}' has a box at frame {f} beyond its {} frames",
                t.track_id,
                t.video_id,
                video.num_frames()
            )));
        }
    }

    Ok(Corpus {
        actions,
        videos,
        features,
        tracks,
    })
}

/// Write `corpus` in the canonical layout. Feature records follow proposal
/// order, so write → read → write is byte-stable.
pub fn write_corpus(corpus: &Corpus, root: &Path) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for a in &corpus.actions {
        check_label(a, "action")?;
    }
    write_atomic(&root.join(ACTIONS_FILE), format_actions(&corpus.actions).as_bytes())?;
    write_atomic(
        &root.join(PROPOSALS_FILE),
        format_proposals(corpus.all_proposals()).as_bytes(),
    )?;
    let ordered_features = corpus
        .all_proposals()
        .filter_map(|p| corpus.feature(&p.video_id, p.frame, p.region_id));
    write_atomic(&root.join(FEATURES_FILE), format_features(ordered_features).as_bytes())?;
    write_atomic(
        &root.join(GROUNDTRUTH_FILE),
        format_groundtruth(&corpus.tracks).as_bytes(),
    )?;
    for video in &corpus.videos {
        for (frame, f) in video.frames.iter().enumerate() {
            write_flow(&f.flow, &flow_path(root, &video.id, frame as u32))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Models

pub fn format_models(models: &[ActionModel]) -> String {
    let mut out = String::new();
    for m in models {
        write!(out, "{}\t{}\t", m.action, m.weights.len()).unwrap();
        fmt_f64(&mut out, m.bias);
        for &w in &m.weights {
            out.push('\t');
            fmt_f64(&mut out, w);
        }
        out.push('\n');
    }
    out
}

pub fn parse_models(path: &Path, text: &str) -> Result<Vec<ActionModel>> {
    let mut seen = HashSet::new();
    records(text)
        .map(|(line, l)| {
            let mut f = Fields::new(path, line, l);
            let action = f.text("action")?.to_string();
            let dim = f.count("dim")?;
            let bias = f.real("bias")?;
            let weights = f.reals(dim, "weight")?;
            f.finish()?;
            if !seen.insert(action.clone()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("duplicate model for action '{action}'"),
                });
            }
            Ok(ActionModel {
                action,
                weights,
                bias,
            })
        })
        .collect()
}

pub fn write_models(models: &[ActionModel], path: &Path) -> Result<()> {
    for m in models {
        check_label(&m.action, "action")?;
    }
    write_atomic(path, format_models(models).as_bytes())
}

pub fn read_models(path: &Path) -> Result<Vec<ActionModel>> {
    parse_models(path, &read_text(path)?)
}

// ---------------------------------------------------------------------------
// Tubes

pub fn format_tubes(tubes: &[ActionTube]) -> String {
    let mut out = String::new();
    for t in tubes {
        write!(out, "{}\t{}\t", t.video_id, t.action).unwrap();
        fmt_f64(&mut out, t.score);
        write!(out, "\t{}", t.regions.len()).unwrap();
        for (frame, b) in &t.regions {
            write!(out, "\t{frame}").unwrap();
            for c in b.to_array() {
                out.push('\t');
                fmt_f64(&mut out, c);
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_tubes(path: &Path, text: &str) -> Result<Vec<ActionTube>> {
    records(text)
        .map(|(line, l)| {
            let mut f = Fields::new(path, line, l);
            let video_id = f.text("video_id")?.to_string();
            let action = f.text("action")?.to_string();
            let score = f.real("score")?;
            let len = f.count("T")?;
            let mut regions = Vec::with_capacity(len);
            for expected in 0..len {
                let frame = f.uint("frame")?;
                if frame as usize != expected {
                    return Err(f.err(format!(
                        "tube frames must be consecutive from 0, found {frame} at position {expected}"
                    )));
                }
                regions.push((frame, f.bbox()?));
            }
            f.finish()?;
            Ok(ActionTube {
                video_id,
                action,
                regions,
                score,
            })
        })
        .collect()
}

pub fn write_tubes(tubes: &[ActionTube], path: &Path) -> Result<()> {
    for t in tubes {
        check_label(&t.video_id, "video_id")?;
        check_label(&t.action, "action")?;
        t.validate()?;
    }
    write_atomic(path, format_tubes(tubes).as_bytes())
}

pub fn read_tubes(path: &Path) -> Result<Vec<ActionTube>> {
    parse_tubes(path, &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> Bbox {
        Bbox::new(x1, y1, x2, y2).unwrap()
    }

    fn write_files(root: &Path, files: &[(&str, &str)]) {
        for (name, body) in files {
            let p = root.join(name);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, body).unwrap();
        }
    }

    fn tiny_corpus(root: &Path, features: &str) {
        write_files(
            root,
            &[
                ("actions.txt", "run\nwalk\n"),
                ("proposals.tsv", "v0\t0\t0\t0\t0\t2\t2\nv0\t0\t1\t1\t1\t2\t2\n"),
                ("features.tsv", features),
                ("groundtruth.tsv", "v0\t0\trun\t0\t0\t0\t2\t2\n"),
            ],
        );
        let map = FlowMagnitudeMap::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        write_flow(&map, &flow_path(root, "v0", 0)).unwrap();
    }

    #[test]
    fn empty_corpus_loads() {
        let dir = tempfile::tempdir().unwrap();
        write_files(
            dir.path(),
            &[
                ("actions.txt", ""),
                ("proposals.tsv", ""),
                ("features.tsv", ""),
                ("groundtruth.tsv", ""),
            ],
        );
        let c = load_corpus(dir.path()).unwrap();
        assert!(c.videos.is_empty());
        assert!(c.actions.is_empty());
    }

    #[test]
    fn tiny_corpus_loads() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(dir.path(), "v0\t0\t1\t2\t1\t0.5\t-1\t3\n");
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!(c.videos.len(), 1);
        assert_eq!(c.videos[0].num_frames(), 1);
        assert_eq!(c.videos[0].frames[0].proposals.len(), 2);
        let f = c.feature("v0", 0, 1).unwrap();
        assert_eq!(f.phi_s, vec![0.5, -1.0]);
        assert_eq!(f.phi_m, vec![3.0]);
        assert_eq!(c.feature_dims(), Some((2, 1)));
        assert_eq!(c.video_label("v0"), Some("run"));
    }

    #[test]
    fn dangling_feature_rejected() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(dir.path(), "v0\t0\t7\t1\t0\t0.5\n");
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(err.to_string().contains("features.tsv"));
    }

    #[test]
    fn feature_dimension_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(dir.path(), "v0\t0\t0\t1\t0\t0.5\nv0\t0\t1\t2\t0\t0.5\t1\n");
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        // declared count larger than the values present
        tiny_corpus(dir.path(), "v0\t0\t0\t3\t0\t0.5\n");
        assert!(load_corpus(dir.path()).is_err());
    }

    #[test]
    fn duplicate_region_rejected() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(dir.path(), "");
        fs::write(
            dir.path().join(PROPOSALS_FILE),
            "v0\t0\t0\t0\t0\t2\t2\nv0\t0\t0\t1\t1\t2\t2\n",
        )
        .unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_flow_and_sparse_frames_rejected() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(dir.path(), "");
        fs::write(dir.path().join(PROPOSALS_FILE), "v0\t0\t0\t0\t0\t2\t2\nv0\t2\t0\t0\t0\t2\t2\n").unwrap();
        assert!(load_corpus(dir.path()).unwrap_err().to_string().contains("frame 1"));

        fs::write(dir.path().join(PROPOSALS_FILE), "v0\t0\t0\t0\t0\t2\t2\nv0\t1\t0\t0\t0\t2\t2\n").unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }

    #[test]
    fn missing_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(dir.path(), "");
        fs::remove_file(dir.path().join(GROUNDTRUTH_FILE)).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn groundtruth_validation() {
        let dir = tempfile::tempdir().unwrap();
        tiny_corpus(dir.path(), "");
        fs::write(dir.path().join(GROUNDTRUTH_FILE), "v0\t0\tjump\t0\t0\t0\t2\t2\n").unwrap();
        assert!(load_corpus(dir.path()).unwrap_err().to_string().contains("jump"));
        fs::write(dir.path().join(GROUNDTRUTH_FILE), "v9\t0\trun\t0\t0\t0\t2\t2\n").unwrap();
        assert!(load_corpus(dir.path()).is_err());
        fs::write(dir.path().join(GROUNDTRUTH_FILE), "v0\t0\trun\t3\t0\t0\t2\t2\n").unwrap();
        assert!(load_corpus(dir.path()).is_err());
        fs::write(
            dir.path().join(GROUNDTRUTH_FILE),
            "v0\t0\trun\t0\t0\t0\t2\t2\nv0\t0\trun\t0\t0\t0\t1\t1\n",
        )
        .unwrap();
        assert!(load_corpus(dir.path()).is_err());
    }

    #[test]
    fn flow_codec() {
        let map = FlowMagnitudeMap::new(1, 1, vec![0.125]).unwrap();
        let bytes = encode_flow(&map);
        assert_eq!(&bytes[..4], b"FLM1");
        assert_eq!(&bytes[4..12], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[12..], &0.125f32.to_le_bytes());
        assert_eq!(decode_flow(Path::new("x"), &bytes).unwrap(), map);

        assert!(decode_flow(Path::new("x"), &bytes[..14]).is_err());
        assert!(decode_flow(Path::new("x"), b"FLM2\x01\0\0\0\x01\0\0\0\0\0\0\0").is_err());
        let mut neg = bytes.clone();
        neg[12..].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(decode_flow(Path::new("x"), &neg).is_err());
    }

    #[test]
    fn tube_parse_errors() {
        let p = Path::new("tubes.tsv");
        assert!(parse_tubes(p, "").unwrap().is_empty());
        let err = parse_tubes(p, "v\trun\tabc\t1\t0\t0\t0\t1\t1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        // frames not consecutive
        assert!(parse_tubes(p, "v\trun\t1\t2\t0\t0\t0\t1\t1\t2\t0\t0\t1\t1\n").is_err());
        // declared length longer than payload
        assert!(parse_tubes(p, "v\trun\t1\t2\t0\t0\t0\t1\t1\n").is_err());
    }

    #[test]
    fn tube_roundtrip_three_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tubes.tsv");
        let tube = ActionTube {
            video_id: "v1".into(),
            action: "walk".into(),
            regions: (0..3).map(|f| (f, bb(0.1 * f as f64, 0.3, 5.7, 9.0 + 1e-12))).collect(),
            score: 0.1 + 0.2,
        };
        write_tubes(std::slice::from_ref(&tube), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1);
        assert_eq!(read_tubes(&path).unwrap(), vec![tube]);

        write_tubes(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        assert!(read_tubes(&path).unwrap().is_empty());
    }

    #[test]
    fn model_parse_errors() {
        let p = Path::new("models.tsv");
        // declared dim 3, only 2 weights
        assert!(parse_models(p, "run\t3\t0.5\t1\t2\n").is_err());
        // declared dim 1, extra weight
        assert!(parse_models(p, "run\t1\t0.5\t1\t2\n").is_err());
        // truncated line
        assert!(parse_models(p, "run\t2").is_err());
        assert!(parse_models(p, "run\t1\t0\t1\nrun\t1\t0\t1\n").is_err());
        let zero = ActionModel {
            action: "run".into(),
            weights: vec![0.0; 4],
            bias: 0.0,
        };
        assert_eq!(parse_models(p, &format_models(std::slice::from_ref(&zero))).unwrap(), vec![zero]);
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("out.tsv");
        write_atomic(&path, b"abc").unwrap();
        write_atomic(&path, b"def").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"def");
        let names: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }
}
