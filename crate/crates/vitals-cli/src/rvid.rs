//! RVID raw-video container: little-endian `RVID` magic, u32 version (1),
//! u32 frame count / height / width / channels (3), f32 fps, then
//! T·H·W·C f32 samples in frame-major, row-major, channel-last order.

use std::path::Path;

use vitals_core::frames::VideoClip;

use crate::{read_file, write_file, CliError};

const MAGIC: &[u8; 4] = b"RVID";
const VERSION: u32 = 1;
/// Bytes before the payload: magic + version + T,H,W,C + fps.
const HEADER_LEN: u64 = 4 + 4 + 4 * 4 + 4;

pub fn write_rvid(clip: &VideoClip, path: &Path) -> Result<(), CliError> {
    let mut bytes = Vec::with_capacity(HEADER_LEN as usize + clip.frames.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [clip.t, clip.h, clip.w, 3usize] {
        let v = u32::try_from(dim).map_err(|_| {
            CliError::runtime(format!("clip dimension {} exceeds the u32 header field", dim))
        })?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&(clip.fps as f32).to_le_bytes());
    for &v in &clip.frames {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CliError> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::format(
                self.path,
                self.pos as u64,
                format!(
                    "truncated while reading {}: need {} bytes, {} left",
                    what,
                    n,
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32, CliError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_rvid(path: &Path) -> Result<VideoClip, CliError> {
    let bytes = read_file(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CliError::format(
            path,
            0,
            format!("bad magic {:?}, expected \"RVID\"", String::from_utf8_lossy(magic)),
        ));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CliError::format(
            path,
            4,
            format!("unsupported version {}, expected {}", version, VERSION),
        ));
    }
    let t = r.u32("frame count")? as usize;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let c = r.u32("channels")? as usize;
    if c != 3 {
        return Err(CliError::format(path, 20, format!("channels = {}, expected 3", c)));
    }
    if t < 2 || h == 0 || w == 0 {
        return Err(CliError::format(
            path,
            8,
            format!("invalid dimensions {}x{}x{} (need T >= 2 and nonzero extents)", t, h, w),
        ));
    }
    let fps = r.f32("fps")?;
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(CliError::format(path, 24, format!("fps {} must be positive", fps)));
    }
    let n = t
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| CliError::format(path, 8, "dimension product overflows"))?;
    let expected = HEADER_LEN + 4 * n as u64;
    if (bytes.len() as u64) < expected {
        return Err(CliError::format(
            path,
            bytes.len() as u64,
            format!(
                "payload truncated: header promises {} samples ({} bytes), file has {}",
                n,
                expected,
                bytes.len()
            ),
        ));
    }
    if bytes.len() as u64 > expected {
        return Err(CliError::format(
            path,
            expected,
            format!("{} trailing bytes after payload", bytes.len() as u64 - expected),
        ));
    }
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let v = f32::from_le_bytes(
            bytes[HEADER_LEN as usize + 4 * i..HEADER_LEN as usize + 4 * i + 4]
                .try_into()
                .unwrap(),
        );
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(CliError::format(
                path,
                HEADER_LEN + 4 * i as u64,
                format!("sample {} = {} outside [0, 1]", i, v),
            ));
        }
        frames.push(v);
    }
    Ok(VideoClip::new(frames, t, h, w, fps as f64))
}
