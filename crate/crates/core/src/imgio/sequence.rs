use std::path::{Path, PathBuf};

use regex::Regex;

use crate::error::{Error, Result};
use crate::frame::Frame;

use super::raster::load_frame;

const EXTENSIONS: [&str; 3] = ["png", "ppm", "pgm"];

/// One discovered frame: its stream index and where it lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameEntry {
    pub index: usize,
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
enum Backing {
    Files(Vec<FrameEntry>),
    Memory(Vec<Frame>),
}

/// An ordered sequence of equally sized frames, either on disk or in memory.
#[derive(Debug, Clone)]
pub struct FrameSource {
    origin: PathBuf,
    backing: Backing,
    width: usize,
    height: usize,
    channels: usize,
}

/// Compiles a printf-style frame pattern such as `frame_%05d.png` into a
/// regex capturing the frame number.
pub fn pattern_regex(pattern: &str) -> Result<Regex> {
    let spec = Regex::new(r"%0?\d*d").unwrap();
    let mut matches = spec.find_iter(pattern);
    let m = matches
        .next()
        .ok_or_else(|| Error::Config(format!("pattern {pattern:?} has no %d placeholder")))?;
    if matches.next().is_some() {
        return Err(Error::Config(format!(
            "pattern {pattern:?} has more than one placeholder"
        )));
    }
    let re = format!(
        "^{}(\\d+){}$",
        regex::escape(&pattern[..m.start()]),
        regex::escape(&pattern[m.end()..])
    );
    Regex::new(&re).map_err(|e| Error::Config(e.to_string()))
}

/// Renders a printf-style pattern for one index (`%05d` and `%d` forms).
pub fn format_pattern(pattern: &str, index: usize) -> Result<String> {
    let spec = Regex::new(r"%(0?)(\d*)d").unwrap();
    let caps = spec
        .captures(pattern)
        .ok_or_else(|| Error::Config(format!("pattern {pattern:?} has no %d placeholder")))?;
    let whole = caps.get(0).unwrap();
    let width: usize = caps[2].parse().unwrap_or(0);
    let number = if &caps[1] == "0" {
        format!("{index:0width$}")
    } else {
        format!("{index:width$}")
    };
    Ok(format!(
        "{}{}{}",
        &pattern[..whole.start()],
        number,
        &pattern[whole.end()..]
    ))
}

fn discover(dir: &Path, pattern: Option<&str>) -> Result<Vec<FrameEntry>> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::UnreadableFile {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut names: Vec<String> = Vec::new();
    for entry in read {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        if let Some(name) = entry.file_name().to_str() {
            names.push(name.to_owned());
        }
    }
    names.sort();

    let mut entries = match pattern {
        Some(pattern) => {
            let re = pattern_regex(pattern)?;
            let mut found: Vec<FrameEntry> = names
                .into_iter()
                .filter_map(|name| {
                    let index = re.captures(&name)?[1].parse().ok()?;
                    Some(FrameEntry {
                        index,
                        path: dir.join(&name),
                        name,
                    })
                })
                .collect();
            found.sort_by_key(|e| e.index);
            found
        }
        None => names
            .into_iter()
            .filter(|name| {
                Path::new(name)
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .enumerate()
            .map(|(i, name)| FrameEntry {
                index: i + 1,
                path: dir.join(&name),
                name,
            })
            .collect(),
    };
    if entries.is_empty() {
        return Err(Error::EmptySequence {
            dir: dir.to_path_buf(),
        });
    }
    for pair in entries.windows(2) {
        if pair[1].index == pair[0].index {
            return Err(Error::SequenceMismatch(format!(
                "duplicate frame index {} in {}",
                pair[0].index,
                dir.display()
            )));
        }
        if pair[1].index != pair[0].index + 1 {
            return Err(Error::MissingFrame {
                dir: dir.to_path_buf(),
                index: pair[0].index + 1,
            });
        }
    }
    entries.dedup();
    Ok(entries)
}

impl FrameSource {
    /// Discovers frames in `dir`. With a pattern, frames are matched by the
    /// number in their name and must be contiguous; without one, supported
    /// raster files are taken in lexicographic order and numbered from 1.
    pub fn open(dir: impl AsRef<Path>, pattern: Option<&str>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = discover(dir, pattern)?;
        let first = load_frame(&entries[0].path)?;
        for e in &entries[1..] {
            let (w, h) = image::image_dimensions(&e.path).map_err(|err| Error::UnreadableFile {
                path: e.path.clone(),
                reason: err.to_string(),
            })?;
            if (w as usize, h as usize) != first.dims() {
                return Err(Error::ResolutionMismatch {
                    expected: first.dims(),
                    found: (w as usize, h as usize),
                });
            }
        }
        Ok(Self {
            origin: dir.to_path_buf(),
            width: first.width(),
            height: first.height(),
            channels: first.channels(),
            backing: Backing::Files(entries),
        })
    }

    /// Wraps frames already in memory, numbered from 1.
    pub fn from_frames(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| Error::EmptySequence {
            dir: "<memory>".into(),
        })?;
        for f in &frames[1..] {
            first.ensure_same_shape(f)?;
        }
        Ok(Self {
            origin: "<memory>".into(),
            width: first.width(),
            height: first.height(),
            channels: first.channels(),
            backing: Backing::Memory(frames),
        })
    }

    pub fn origin(&self) -> &Path {
        &self.origin
    }

    pub fn len(&self) -> usize {
        match &self.backing {
            Backing::Files(e) => e.len(),
            Backing::Memory(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Frame identifiers in iteration order (file names, or `#index` for memory sources).
    pub fn ids(&self) -> Vec<String> {
        match &self.backing {
            Backing::Files(e) => e.iter().map(|e| e.name.clone()).collect(),
            Backing::Memory(f) => (1..=f.len()).map(|i| format!("#{i}")).collect(),
        }
    }

    /// Stream index (1-based for memory sources) of the frame at `position`.
    pub fn index_at(&self, position: usize) -> usize {
        match &self.backing {
            Backing::Files(e) => e[position].index,
            Backing::Memory(_) => position + 1,
        }
    }

    pub fn entries(&self) -> Option<&[FrameEntry]> {
        match &self.backing {
            Backing::Files(e) => Some(e),
            Backing::Memory(_) => None,
        }
    }

    /// Loads the frame at `position` (0-based).
    pub fn load(&self, position: usize) -> Result<Frame> {
        let frame = match &self.backing {
            Backing::Files(e) => load_frame(&e[position].path)?,
            Backing::Memory(f) => f[position].clone(),
        };
        if frame.dims() != self.resolution() || frame.channels() != self.channels {
            return Err(Error::SequenceMismatch(format!(
                "frame {} has shape {:?}x{} but the sequence is {:?}x{}",
                self.index_at(position),
                frame.dims(),
                frame.channels(),
                self.resolution(),
                self.channels
            )));
        }
        Ok(frame)
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.len()).map(move |i| self.load(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::save_frame;

    fn write_frames(dir: &Path, names: &[&str]) {
        let f = Frame::filled(4, 3, 3, 0.25).unwrap();
        for n in names {
            save_frame(&f, dir.join(n)).unwrap();
        }
    }

    #[test]
    fn pattern_matches_and_orders_by_number() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(
            dir.path(),
            &[
                "frame_00010.png",
                "frame_00008.png",
                "frame_00009.png",
                "other.png",
            ],
        );
        let src = FrameSource::open(dir.path(), Some("frame_%05d.png")).unwrap();
        assert_eq!(src.len(), 3);
        assert_eq!(src.index_at(0), 8);
        assert_eq!(
            src.ids(),
            vec!["frame_00008.png", "frame_00009.png", "frame_00010.png"]
        );
        assert_eq!(src.ids(), src.ids());
    }

    #[test]
    fn gap_names_the_missing_frame() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &["f_1.png", "f_2.png", "f_4.png", "f_5.png"]);
        let err = FrameSource::open(dir.path(), Some("f_%d.png")).unwrap_err();
        assert!(matches!(err, Error::MissingFrame { index: 3, .. }), "{err}");
    }

    #[test]
    fn lexicographic_fallback() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), &["b.png", "a.ppm", "c.png"]);
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let src = FrameSource::open(dir.path(), None).unwrap();
        assert_eq!(src.ids(), vec!["a.ppm", "b.png", "c.png"]);
        assert_eq!(src.index_at(2), 3);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            FrameSource::open(dir.path(), None),
            Err(Error::EmptySequence { .. })
        ));
    }

    #[test]
    fn mixed_resolution_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_frame(
            &Frame::filled(4, 4, 3, 0.1).unwrap(),
            dir.path().join("a.png"),
        )
        .unwrap();
        save_frame(
            &Frame::filled(5, 4, 3, 0.1).unwrap(),
            dir.path().join("b.png"),
        )
        .unwrap();
        assert!(matches!(
            FrameSource::open(dir.path(), None),
            Err(Error::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn format_pattern_forms() {
        assert_eq!(
            format_pattern("frame_%05d.png", 42).unwrap(),
            "frame_00042.png"
        );
        assert_eq!(format_pattern("f%d.ppm", 7).unwrap(), "f7.ppm");
        assert!(format_pattern("plain.png", 1).is_err());
    }
}
