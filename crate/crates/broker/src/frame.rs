//! Length-prefixed frames: a 4-byte big-endian payload length followed by
//! the record's canonical wire form in UTF-8.

use std::io::{self, Read};

use semfarm_core::CanonicalRecord;
use thiserror::Error;

pub const HEADER_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("oversize frame: {declared} bytes exceeds {MAX_PAYLOAD}")]
    Oversize { declared: usize },
    #[error("frame payload is not a canonical record: {0}")]
    Payload(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn frame_encode(record: &CanonicalRecord) -> Result<Vec<u8>, FrameError> {
    let payload = record.to_wire();
    if payload.len() > MAX_PAYLOAD {
        return Err(FrameError::Oversize {
            declared: payload.len(),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload.as_bytes());
    Ok(out)
}

fn declared_len(header: [u8; HEADER_LEN]) -> Result<usize, FrameError> {
    let declared = u32::from_be_bytes(header) as usize;
    if declared > MAX_PAYLOAD {
        return Err(FrameError::Oversize { declared });
    }
    Ok(declared)
}

fn parse_payload(payload: &[u8]) -> Result<CanonicalRecord, FrameError> {
    let text = std::str::from_utf8(payload).map_err(|e| FrameError::Payload(e.to_string()))?;
    CanonicalRecord::from_wire(text).map_err(|e| FrameError::Payload(e.to_string()))
}

/// Decodes the first frame in `bytes`, returning the record and the number
/// of bytes consumed.
pub fn frame_decode(bytes: &[u8]) -> Result<(CanonicalRecord, usize), FrameError> {
    let Some(header) = bytes.first_chunk::<HEADER_LEN>() else {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    };
    let declared = declared_len(*header)?;
    let total = HEADER_LEN + declared;
    if bytes.len() < total {
        return Err(FrameError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    Ok((parse_payload(&bytes[HEADER_LEN..total])?, total))
}

/// Reads one frame from a stream. `Ok(None)` on a clean end of stream
/// before any header byte.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<CanonicalRecord>, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(reader, &mut header)?;
    if got == 0 {
        return Ok(None);
    }
    if got < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            available: got,
        });
    }
    let declared = declared_len(header)?;
    let mut payload = vec![0u8; declared];
    let got = read_full(reader, &mut payload)?;
    if got < declared {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN + declared,
            available: HEADER_LEN + got,
        });
    }
    parse_payload(&payload).map(Some)
}

fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WIRE: &str = r#"{"sensor_id":"TEMP102SC","quantity":"temperature","value":36.78,"unit":"Celsius","timestamp":1000,"lat":31.95,"lon":35.91,"description":"Ambient temperature","keywords":["temperature"],"confidence":1.0}"#;

    fn record() -> CanonicalRecord {
        CanonicalRecord::from_wire(WIRE).unwrap()
    }

    #[test]
    fn header_is_big_endian_length() {
        let bytes = frame_encode(&record()).unwrap();
        let len = WIRE.len() as u32;
        assert_eq!(&bytes[..4], &len.to_be_bytes());
        assert_eq!(&bytes[4..], WIRE.as_bytes());
    }

    #[test]
    fn round_trips() {
        let bytes = frame_encode(&record()).unwrap();
        let (r, used) = frame_decode(&bytes).unwrap();
        assert_eq!(r, record());
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn three_bytes_are_truncated() {
        assert!(matches!(
            frame_decode(&[0, 0, 1]),
            Err(FrameError::Truncated {
                needed: 4,
                available: 3
            })
        ));
        let bytes = frame_encode(&record()).unwrap();
        assert!(matches!(
            frame_decode(&bytes[..bytes.len() - 1]),
            Err(FrameError::Truncated { .. })
        ));
    }

    #[test]
    fn two_mebibyte_header_is_oversize() {
        let header = (2 * 1024 * 1024u32).to_be_bytes();
        assert!(matches!(
            frame_decode(&header),
            Err(FrameError::Oversize { declared }) if declared == 2 * 1024 * 1024
        ));
        assert!(matches!(
            read_frame(&mut &header[..]),
            Err(FrameError::Oversize { .. })
        ));
    }

    #[test]
    fn stream_reading() {
        let mut bytes = frame_encode(&record()).unwrap();
        bytes.extend(frame_encode(&record()).unwrap());
        let mut cursor = &bytes[..];
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(record()));
        assert_eq!(read_frame(&mut cursor).unwrap(), Some(record()));
        assert_eq!(read_frame(&mut cursor).unwrap(), None);
        assert!(matches!(
            read_frame(&mut &bytes[..2]),
            Err(FrameError::Truncated { .. })
        ));
    }

    #[test]
    fn garbage_payload() {
        let mut bytes = 3u32.to_be_bytes().to_vec();
        bytes.extend_from_slice(b"abc");
        assert!(matches!(frame_decode(&bytes), Err(FrameError::Payload(_))));
    }
}
