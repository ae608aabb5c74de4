//! The `.demo` text format.
//!
//! ```text
//! # comment lines start with '#'
//! format demo
//! version 1
//! frame origin=mid_shoulders x=forward y=left z=up units=m,rad
//! label <free text>
//! dt <seconds>
//! skeleton <shoulder_half_width> <upper_arm> <forearm> <5 finger lengths>
//! lengths <side> <arm> <forearm> <finger lengths...>     one line per side
//! frames <count>
//! <26 x 3 keypoint coordinates> <2 x 9 wrist rotations, row-major>
//! ```
//!
//! One frame per line. Numbers are written in shortest round-trip form, so
//! loading a saved sequence reproduces it exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::demo::{DemoFrame, DemoSequence};
use super::skeleton::{HumanSkeleton, SIDES};
use crate::error::{Error, Result};
use crate::kinematics::{ChainNorms, Mat3, Vec3};

pub const DEMO_VERSION: u32 = 1;
pub const FRAME_CONVENTION: &str = "origin=mid_shoulders x=forward y=left z=up units=m,rad";

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, x) in xs.into_iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{x}").unwrap();
    }
    s
}

/// Serialize a validated sequence.
pub fn to_demo_string(seq: &DemoSequence) -> Result<String> {
    seq.validate()?;
    if seq.label.contains('\n') {
        return Err(Error::Validation("label must be a single line".into()));
    }
    let sk = &seq.skeleton;
    let mut out = String::new();
    out.push_str("# neural-retarget demonstration\n");
    writeln!(out, "format demo").unwrap();
    writeln!(out, "version {DEMO_VERSION}").unwrap();
    writeln!(out, "frame {FRAME_CONVENTION}").unwrap();
    writeln!(out, "label {}", seq.label).unwrap();
    writeln!(out, "dt {}", seq.dt).unwrap();
    writeln!(
        out,
        "skeleton {}",
        join([sk.shoulder_half_width, sk.upper_arm, sk.forearm].into_iter().chain(sk.fingers))
    )
    .unwrap();
    let lengths = seq
        .frames
        .first()
        .map(|f| f.lengths.clone())
        .unwrap_or_else(|| default_lengths(sk));
    for (side, l) in SIDES.iter().zip(&lengths) {
        writeln!(
            out,
            "lengths {side} {}",
            join([l.arm, l.forearm].into_iter().chain(l.fingers.iter().copied()))
        )
        .unwrap();
    }
    writeln!(out, "frames {}", seq.frames.len()).unwrap();
    for f in &seq.frames {
        let pos = f.positions.iter().flat_map(|p| [p.x, p.y, p.z]);
        let rot = f
            .wrist_rotations
            .iter()
            .flat_map(|r| (0..9).map(move |k| r[(k / 3, k % 3)]));
        out.push_str(&join(pos.chain(rot)));
        out.push('\n');
    }
    Ok(out)
}

fn default_lengths(sk: &HumanSkeleton) -> Vec<ChainNorms> {
    sk.model()
        .map(|m| m.norms().to_vec())
        .unwrap_or_default()
}

struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, line: usize, field: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    /// Next non-comment line as (line number, text).
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (n, l) in self.lines.by_ref() {
            let t = l.trim_end();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((n + 1, t));
        }
        None
    }

    /// Next line, which must start with `key`; returns the remainder.
    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self
            .next()
            .ok_or_else(|| self.err(0, key, "unexpected end of file"))?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok((n, rest.trim())),
            _ if l == key => Ok((n, "")),
            _ => Err(self.err(n, key, format!("expected `{key}`, found `{l}`"))),
        }
    }

    fn numbers(&self, line: usize, field: &str, text: &str) -> Result<Vec<f64>> {
        text.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.err(line, field, format!("bad number `{t}`")))
            })
            .collect()
    }
}

pub fn parse_demo(src: &str, path: &Path) -> Result<DemoSequence> {
    let mut r = Reader {
        lines: src.lines().enumerate().peekable(),
        path,
    };
    let (n, fmt) = r.keyed("format")?;
    if fmt != "demo" {
        return Err(r.err(n, "format", format!("expected `demo`, found `{fmt}`")));
    }
    let (n, ver) = r.keyed("version")?;
    if ver != DEMO_VERSION.to_string() {
        return Err(r.err(n, "version", format!("unsupported version `{ver}`")));
    }
    let (n, conv) = r.keyed("frame")?;
    if conv != FRAME_CONVENTION {
        return Err(r.err(n, "frame", format!("unsupported frame convention `{conv}`")));
    }
    let (_, label) = r.keyed("label")?;
    let (n, dt) = r.keyed("dt")?;
    let dt = r.numbers(n, "dt", dt)?;
    if dt.len() != 1 {
        return Err(r.err(n, "dt", "expected one number"));
    }
    let (n, sk) = r.keyed("skeleton")?;
    let sk = r.numbers(n, "skeleton", sk)?;
    if sk.len() != 8 {
        return Err(r.err(n, "skeleton", format!("expected 8 numbers, found {}", sk.len())));
    }
    let skeleton = HumanSkeleton {
        shoulder_half_width: sk[0],
        upper_arm: sk[1],
        forearm: sk[2],
        fingers: [sk[3], sk[4], sk[5], sk[6], sk[7]],
    };
    let mut lengths = Vec::new();
    for side in SIDES {
        let (n, rest) = r.keyed("lengths")?;
        let (s, nums) = rest.split_once(' ').unwrap_or((rest, ""));
        if s != side {
            return Err(r.err(n, "lengths", format!("expected side `{side}`, found `{s}`")));
        }
        let v = r.numbers(n, "lengths", nums)?;
        if v.len() < 2 {
            return Err(r.err(n, "lengths", "expected arm and forearm lengths"));
        }
        lengths.push(ChainNorms {
            arm: v[0],
            forearm: v[1],
            fingers: v[2..].to_vec(),
        });
    }
    let (n, count) = r.keyed("frames")?;
    let count: usize = count
        .parse()
        .map_err(|_| r.err(n, "frames", format!("bad frame count `{count}`")))?;
    let n_kp = HumanSkeleton::keypoints().len();
    let width = 3 * n_kp + 18;
    let mut frames = Vec::with_capacity(count);
    for t in 0..count {
        let (n, l) = r
            .next()
            .ok_or_else(|| r.err(0, "frames", format!("expected {count} frames, found {t}")))?;
        let v = r.numbers(n, "frame", l)?;
        if v.len() != width {
            return Err(r.err(n, "frame", format!("expected {width} numbers, found {}", v.len())));
        }
        let positions = (0..n_kp).map(|k| Vec3::new(v[3 * k], v[3 * k + 1], v[3 * k + 2])).collect();
        let rot = |o: usize| Mat3::from_fn(|i, j| v[o + 3 * i + j]);
        let frame = DemoFrame {
            positions,
            wrist_rotations: vec![rot(3 * n_kp), rot(3 * n_kp + 9)],
            lengths: lengths.clone(),
        };
        frame
            .validate()
            .map_err(|e| Error::Validation(format!("{}:{n}: {e}", path.display())))?;
        frames.push(frame);
    }
    if let Some((n, _)) = r.next() {
        return Err(r.err(n, "frames", "trailing data after the last frame"));
    }
    let seq = DemoSequence {
        label: label.to_string(),
        dt: dt[0],
        skeleton,
        frames,
    };
    seq.validate()?;
    Ok(seq)
}

pub fn load_demo(path: impl AsRef<Path>) -> Result<DemoSequence> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_demo(&src, path)
}

pub fn save_demo(seq: &DemoSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_demo_string(seq)?).map_err(|e| Error::io(PathBuf::from(path), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::synth_demo;

    #[test]
    fn round_trip_is_exact() {
        let seq = synth_demo(4, 12, 1.0 / 30.0, &HumanSkeleton::default(), 1.0).unwrap();
        let text = to_demo_string(&seq).unwrap();
        assert_eq!(parse_demo(&text, Path::new("x.demo")).unwrap(), seq);
    }

    #[test]
    fn rejects_unknown_version_and_bad_rotation() {
        let seq = synth_demo(4, 2, 1.0 / 30.0, &HumanSkeleton::default(), 1.0).unwrap();
        let text = to_demo_string(&seq).unwrap();
        let v2 = text.replace("version 1", "version 2");
        assert!(parse_demo(&v2, Path::new("x")).unwrap_err().to_string().contains("version"));

        let mut bad = seq.clone();
        bad.frames[1].wrist_rotations[0] *= 1.01;
        assert!(to_demo_string(&bad).is_err());
        let lines: Vec<&str> = text.lines().collect();
        let last = lines.last().unwrap();
        let mut nums: Vec<f64> = last.split(' ').map(|t| t.parse().unwrap()).collect();
        let k = nums.len() - 18;
        nums[k] *= 1.01;
        let patched = text.replace(last, &join(nums));
        let err = parse_demo(&patched, Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }
}
