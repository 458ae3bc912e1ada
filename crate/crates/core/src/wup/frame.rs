//! Length-prefixed framing: 4-byte big-endian length, then the body.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAX_FRAME: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME}-byte limit")]
    TooLarge(usize),
    #[error("connection closed before a frame started")]
    Closed,
    #[error("truncated frame")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn frame_write<W: Write + ?Sized>(w: &mut W, body: &[u8]) -> Result<(), FrameError> {
    if body.len() > MAX_FRAME {
        return Err(FrameError::TooLarge(body.len()));
    }
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
    buf.extend_from_slice(body);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn frame_read<R: Read + ?Sized>(r: &mut R) -> Result<Vec<u8>, FrameError> {
    let mut len_buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len_buf[got..]) {
            Ok(0) if got == 0 => return Err(FrameError::Closed),
            Ok(0) => return Err(FrameError::Truncated),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn roundtrip() {
        let mut buf = Vec::new();
        frame_write(&mut buf, b"hello").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        assert_eq!(frame_read(&mut Cursor::new(buf)).unwrap(), b"hello");
    }

    #[test]
    fn empty_frame() {
        let mut buf = Vec::new();
        frame_write(&mut buf, b"").unwrap();
        assert_eq!(buf, vec![0, 0, 0, 0]);
        assert_eq!(frame_read(&mut Cursor::new(buf)).unwrap(), b"");
    }

    #[test]
    fn oversize_and_truncation() {
        let huge = (1u32 << 30).to_be_bytes();
        assert!(matches!(frame_read(&mut Cursor::new(huge.to_vec())), Err(FrameError::TooLarge(_))));
        assert!(matches!(frame_write(&mut Vec::new(), &vec![0; MAX_FRAME + 1]), Err(FrameError::TooLarge(_))));
        assert!(frame_write(&mut Vec::new(), &vec![0; MAX_FRAME]).is_ok());
        assert!(matches!(frame_read(&mut Cursor::new(vec![0, 0, 0, 9, 1, 2])), Err(FrameError::Truncated)));
        assert!(matches!(frame_read(&mut Cursor::new(vec![0, 0])), Err(FrameError::Truncated)));
        assert!(matches!(frame_read(&mut Cursor::new(Vec::new())), Err(FrameError::Closed)));
    }
}
