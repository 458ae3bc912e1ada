//! Canonical WUP message encoding.
//!
//! ```text
//! "WUP1" | kind (1) | field count (2, BE) | fields | CRC-32 (4, BE)
//! field = name length (1) | name | value length (4, BE) | value
//! ```
//!
//! The CRC covers every byte before it. A message parses iff magic, layout
//! and checksum are all correct; the server treats that as "valid request".

use super::WupError;

pub const MAGIC: &[u8; 4] = b"WUP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Request,
    Response,
    UpdateQuery,
    UpdateInfo,
}

impl MessageKind {
    fn code(self) -> u8 {
        match self {
            MessageKind::Request => 1,
            MessageKind::Response => 2,
            MessageKind::UpdateQuery => 3,
            MessageKind::UpdateInfo => 4,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => MessageKind::Request,
            2 => MessageKind::Response,
            3 => MessageKind::UpdateQuery,
            4 => MessageKind::UpdateInfo,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WupMessage {
    pub kind: MessageKind,
    pub fields: Vec<(String, Vec<u8>)>,
}

impl WupMessage {
    pub fn new(kind: MessageKind) -> Self {
        WupMessage { kind, fields: Vec::new() }
    }

    pub fn with_field(mut self, name: &str, value: impl Into<Vec<u8>>) -> Self {
        self.fields.push((name.to_string(), value.into()));
        self
    }

    pub fn field(&self, name: &str) -> Option<&[u8]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn field_str(&self, name: &str) -> Option<&str> {
        self.field(name).and_then(|v| std::str::from_utf8(v).ok())
    }

    /// A typical telemetry request, as an honest client would send.
    pub fn sample_request(client_id: &str) -> Self {
        WupMessage::new(MessageKind::Request)
            .with_field("servant", "stat")
            .with_field("func", "report")
            .with_field("guid", client_id)
            .with_field("imei", "860000000000001")
            .with_field("qua", "ADRQB_65_2170")
    }

    pub fn encode(&self) -> Result<Vec<u8>, WupError> {
        if self.fields.len() > u16::MAX as usize {
            return Err(WupError::Malformed("too many fields"));
        }
        let mut out = Vec::with_capacity(16 + self.fields.iter().map(|(n, v)| 5 + n.len() + v.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&(self.fields.len() as u16).to_be_bytes());
        for (name, value) in &self.fields {
            let name_len = u8::try_from(name.len()).map_err(|_| WupError::Malformed("field name longer than 255 bytes"))?;
            let value_len = u32::try_from(value.len()).map_err(|_| WupError::Malformed("field value too long"))?;
            out.push(name_len);
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&value_len.to_be_bytes());
            out.extend_from_slice(value);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WupError> {
        if bytes.len() < 4 + 1 + 2 + 4 {
            return Err(WupError::Malformed("message too short"));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let crc = u32::from_be_bytes(crc_bytes.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != crc {
            return Err(WupError::BadChecksum);
        }
        if &body[..4] != MAGIC {
            return Err(WupError::BadMagic);
        }
        let kind = MessageKind::from_code(body[4]).ok_or(WupError::Malformed("unknown message kind"))?;
        let count = u16::from_be_bytes([body[5], body[6]]) as usize;
        let mut cursor = Cursor { buf: body, pos: 7 };
        let mut fields = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let name_len = cursor.take(1)?[0] as usize;
            let name = std::str::from_utf8(cursor.take(name_len)?)
                .map_err(|_| WupError::Malformed("field name is not UTF-8"))?
                .to_string();
            let value_len = u32::from_be_bytes(cursor.take(4)?.try_into().expect("4 bytes")) as usize;
            let value = cursor.take(value_len)?.to_vec();
            fields.push((name, value));
        }
        if cursor.pos != body.len() {
            return Err(WupError::Malformed("trailing bytes after fields"));
        }
        Ok(WupMessage { kind, fields })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WupError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(WupError::Malformed("truncated field"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}
