//! Raw planar YUV 4:2:0 video with a text QP sidecar.
//!
//! Sidecar layout:
//!
//! ```text
//! width height frame_count [yuv420p]
//! qp_0
//! qp_1
//! ...
//! ```
//!
//! Blank lines are ignored. The optional fourth header token names the pixel
//! format; only `yuv420p` (8-bit) is known.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StreamError};
use crate::tensor::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    #[default]
    Yuv420p,
}

impl fmt::Display for PixelFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("yuv420p")
    }
}

impl FromStr for PixelFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yuv420p" => Ok(PixelFormat::Yuv420p),
            other => Err(StreamError::UnknownFormat(other.to_string()).into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    #[serde(default)]
    pub format: PixelFormat,
}

impl StreamHeader {
    pub fn new(width: usize, height: usize, frame_count: usize) -> Result<Self> {
        let h = Self {
            width,
            height,
            frame_count,
            format: PixelFormat::Yuv420p,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(StreamError::BadDimensions {
                width: self.width,
                height: self.height,
            }
            .into());
        }
        if self.frame_count == 0 {
            return Err(Error::Stream(StreamError::Sidecar {
                line: 1,
                message: "frame count must be positive".into(),
            }));
        }
        Ok(())
    }

    pub fn luma_bytes(&self) -> usize {
        self.width * self.height
    }

    pub fn chroma_bytes(&self) -> usize {
        (self.width / 2) * (self.height / 2)
    }

    pub fn frame_bytes(&self) -> usize {
        self.luma_bytes() + 2 * self.chroma_bytes()
    }

    pub fn file_bytes(&self) -> u64 {
        self.frame_bytes() as u64 * self.frame_count as u64
    }

    /// Parses `WxH` into a header with the given frame count.
    pub fn from_size(size: &str, frame_count: usize) -> Result<Self> {
        let (w, h) = size
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::config(format!("size must look like WIDTHxHEIGHT, got `{size}`")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::config(format!("bad size component `{s}`")))
        };
        Self::new(parse(w)?, parse(h)?, frame_count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub header: StreamHeader,
    pub qps: Vec<i32>,
}

impl Sidecar {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (line, first) = lines.next().ok_or(StreamError::Sidecar {
            line: 1,
            message: "empty sidecar".into(),
        })?;
        let tokens: Vec<&str> = first.split_whitespace().collect();
        if !(3..=4).contains(&tokens.len()) {
            return Err(StreamError::Sidecar {
                line,
                message: format!("expected `width height frame_count [format]`, got `{first}`"),
            }
            .into());
        }
        let num = |s: &str| {
            s.parse::<usize>().map_err(|_| StreamError::Sidecar {
                line,
                message: format!("`{s}` is not a non-negative integer"),
            })
        };
        let format = match tokens.get(3) {
            Some(t) => t.parse()?,
            None => PixelFormat::Yuv420p,
        };
        let header = StreamHeader {
            width: num(tokens[0])?,
            height: num(tokens[1])?,
            frame_count: num(tokens[2])?,
            format,
        };
        header.validate()?;
        let qps = lines
            .map(|(line, l)| {
                l.parse::<i32>().map_err(|_| {
                    Error::Stream(StreamError::Sidecar {
                        line,
                        message: format!("`{l}` is not an integer QP"),
                    })
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if qps.len() != header.frame_count {
            return Err(StreamError::QpCount {
                expected: header.frame_count,
                found: qps.len(),
            }
            .into());
        }
        Ok(Self { header, qps })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut s = format!("{} {} {}\n", h.width, h.height, h.frame_count);
        for qp in &self.qps {
            s.push_str(&format!("{qp}\n"));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// One decoded frame: float luma, raw chroma.
#[derive(Debug, Clone, PartialEq)]
pub struct YuvFrame {
    pub y: Plane,
    pub u: Vec<u8>,
    pub v: Vec<u8>,
}

impl YuvFrame {
    pub fn from_bytes(header: &StreamHeader, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != header.frame_bytes() {
            return Err(StreamError::SizeMismatch {
                expected: header.frame_bytes() as u64,
                actual: bytes.len() as u64,
            }
            .into());
        }
        let (l, c) = (header.luma_bytes(), header.chroma_bytes());
        Ok(Self {
            y: Plane::from_u8(header.height, header.width, &bytes[..l])?,
            u: bytes[l..l + c].to_vec(),
            v: bytes[l + c..].to_vec(),
        })
    }

    /// Luma rounded and clamped to 8 bits, followed by the chroma planes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.y.to_u8();
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out
    }

    fn check(&self, header: &StreamHeader) -> Result<()> {
        if self.y.dims() != (header.height, header.width)
            || self.u.len() != header.chroma_bytes()
            || self.v.len() != header.chroma_bytes()
        {
            return Err(Error::shape(
                "frame",
                &[header.height, header.width],
                &[self.y.height(), self.y.width()],
            ));
        }
        Ok(())
    }
}

/// Lazily reads frames of a raw video file.
pub struct VideoReader {
    path: PathBuf,
    header: StreamHeader,
    file: BufReader<File>,
    buf: Vec<u8>,
    read: usize,
}

impl VideoReader {
    pub fn open(path: &Path, header: StreamHeader) -> Result<Self> {
        header.validate()?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
        if actual != header.file_bytes() {
            return Err(StreamError::SizeMismatch {
                expected: header.file_bytes(),
                actual,
            }
            .into());
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            file: BufReader::new(file),
            buf: vec![0; header.frame_bytes()],
            read: 0,
        })
    }

    pub fn header(&self) -> &StreamHeader {
        &self.header
    }

    /// Number of frames handed out so far.
    pub fn frames_read(&self) -> usize {
        self.read
    }

    pub fn next_frame(&mut self) -> Result<Option<YuvFrame>> {
        if self.read >= self.header.frame_count {
            return Ok(None);
        }
        self.file
            .read_exact(&mut self.buf)
            .map_err(|e| Error::io(&self.path, e))?;
        self.read += 1;
        YuvFrame::from_bytes(&self.header, &self.buf).map(Some)
    }
}

impl Iterator for VideoReader {
    type Item = Result<YuvFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

/// Frames paired with their sidecar QP, in display order.
pub struct FrameStream {
    reader: VideoReader,
    qps: Vec<i32>,
}

impl FrameStream {
    pub fn header(&self) -> &StreamHeader {
        self.reader.header()
    }

    pub fn qps(&self) -> &[i32] {
        &self.qps
    }

    pub fn frames_read(&self) -> usize {
        self.reader.frames_read()
    }
}

impl Iterator for FrameStream {
    type Item = Result<(YuvFrame, i32)>;

    fn next(&mut self) -> Option<Self::Item> {
        let i = self.reader.frames_read();
        let qp = *self.qps.get(i)?;
        self.reader.next().map(|r| r.map(|f| (f, qp)))
    }
}

pub fn read_stream(video: &Path, sidecar: &Path) -> Result<FrameStream> {
    let side = Sidecar::load(sidecar)?;
    Ok(FrameStream {
        reader: VideoReader::open(video, side.header)?,
        qps: side.qps,
    })
}

pub struct VideoWriter {
    path: PathBuf,
    header: StreamHeader,
    out: BufWriter<File>,
    written: usize,
}

impl VideoWriter {
    pub fn create(path: &Path, header: StreamHeader) -> Result<Self> {
        header.validate()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            out: BufWriter::new(file),
            written: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &YuvFrame) -> Result<()> {
        frame.check(&self.header)?;
        if self.written >= self.header.frame_count {
            return Err(Error::config(format!(
                "stream declares {} frames, refusing to write more",
                self.header.frame_count
            )));
        }
        self.out
            .write_all(&frame.to_bytes())
            .map_err(|e| Error::io(&self.path, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.header.frame_count {
            return Err(StreamError::QpCount {
                expected: self.header.frame_count,
                found: self.written,
            }
            .into());
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_stream<'a>(
    path: &Path,
    header: StreamHeader,
    frames: impl IntoIterator<Item = &'a YuvFrame>,
) -> Result<()> {
    let mut w = VideoWriter::create(path, header)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()
}
