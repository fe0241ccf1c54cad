//! IPTF template files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "IPTF"
//! 4       1     version (1)
//! 5       1     flags: bit0 embedding present, bit1 aged
//! 6       2     ppi
//! 8       1     thumb (0 left, 1 right)
//! 9       1     gender (0 unknown, 1 male, 2 female)
//! 10      2     age in weeks at capture
//! 12      1+n   subject id, u8 length + UTF-8
//! ..      1+n   session id, u8 length + UTF-8
//! ..      2     minutiae count
//! ..      8*N   x u24, y u24 (8 fractional bits), theta u16 (turns / 65536)
//! ..      768   optional 192 x f32 embedding
//! ```
//!
//! All multi-byte fields are little-endian. A template with empty ids and no
//! minutiae is [`HEADER_LEN`] bytes.

use std::f64::consts::TAU;

use crate::error::TemplateError;
use crate::types::{Gender, Minutia, MinutiaeSet, Template, Thumb, EMBEDDING_DIM};

pub const MAGIC: [u8; 4] = *b"IPTF";
pub const VERSION: u8 = 1;
/// Size of a record with empty ids, no minutiae and no embedding.
pub const HEADER_LEN: usize = 16;
pub const MINUTIA_LEN: usize = 8;

const FLAG_EMBEDDING: u8 = 1;
const FLAG_AGED: u8 = 1 << 1;
const COORD_SCALE: f64 = 256.0;
const COORD_LIMIT: u32 = 1 << 24;
const ANGLE_STEPS: f64 = 65536.0;

/// Fixed-point coordinate, 8 fractional bits.
pub fn quantize_coord(v: f64) -> Option<u32> {
    let q = (v * COORD_SCALE).round();
    if q.is_finite() && q >= 0.0 && q < COORD_LIMIT as f64 {
        Some(q as u32)
    } else {
        None
    }
}

pub fn quantize_angle(theta: f64) -> u16 {
    ((theta / TAU * ANGLE_STEPS).round() as i64).rem_euclid(65536) as u16
}

pub fn dequantize_coord(q: u32) -> f64 {
    q as f64 / COORD_SCALE
}

pub fn dequantize_angle(q: u16) -> f64 {
    q as f64 * TAU / ANGLE_STEPS
}

/// Snaps a minutia onto the codec grid, i.e. what a write/read cycle returns.
pub fn quantize_minutia(m: &Minutia) -> Option<Minutia> {
    Some(Minutia {
        x: dequantize_coord(quantize_coord(m.x)?),
        y: dequantize_coord(quantize_coord(m.y)?),
        theta: dequantize_angle(quantize_angle(m.theta)),
    })
}

fn invalid(msg: impl Into<String>) -> TemplateError {
    TemplateError::Invalid(msg.into())
}

pub fn write_template(t: &Template) -> Result<Vec<u8>, TemplateError> {
    t.validate().map_err(|e| invalid(e.to_string()))?;
    let ppi = u16::try_from(t.minutiae.source_ppi).map_err(|_| invalid("ppi exceeds u16"))?;
    let age = u16::try_from(t.age_weeks_at_capture).map_err(|_| invalid("age exceeds u16"))?;
    let count = u16::try_from(t.minutiae.len()).map_err(|_| invalid("more than 65535 minutiae"))?;
    for (name, id) in [("subject id", &t.subject_id), ("session id", &t.session_id)] {
        if id.len() > u8::MAX as usize {
            return Err(invalid(format!("{name} longer than 255 bytes")));
        }
    }

    let mut out = Vec::with_capacity(
        HEADER_LEN
            + t.subject_id.len()
            + t.session_id.len()
            + MINUTIA_LEN * t.minutiae.len()
            + t.embedding.as_ref().map_or(0, |e| 4 * e.len()),
    );
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    let mut flags = 0;
    if t.embedding.is_some() {
        flags |= FLAG_EMBEDDING;
    }
    if t.aged {
        flags |= FLAG_AGED;
    }
    out.push(flags);
    out.extend_from_slice(&ppi.to_le_bytes());
    out.push(t.thumb.code());
    out.push(t.gender.code());
    out.extend_from_slice(&age.to_le_bytes());
    out.push(t.subject_id.len() as u8);
    out.extend_from_slice(t.subject_id.as_bytes());
    out.push(t.session_id.len() as u8);
    out.extend_from_slice(t.session_id.as_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for m in &t.minutiae.minutiae {
        let x = quantize_coord(m.x).ok_or_else(|| invalid(format!("x = {} not encodable", m.x)))?;
        let y = quantize_coord(m.y).ok_or_else(|| invalid(format!("y = {} not encodable", m.y)))?;
        out.extend_from_slice(&x.to_le_bytes()[..3]);
        out.extend_from_slice(&y.to_le_bytes()[..3]);
        out.extend_from_slice(&quantize_angle(m.theta).to_le_bytes());
    }
    if let Some(e) = &t.embedding {
        for v in e {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], TemplateError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(TemplateError::Truncated {
                section,
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, section: &'static str) -> Result<u8, TemplateError> {
        Ok(self.take(1, section)?[0])
    }

    fn u16(&mut self, section: &'static str) -> Result<u16, TemplateError> {
        let b = self.take(2, section)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn string(&mut self, section: &'static str) -> Result<String, TemplateError> {
        let len = self.u8(section)? as usize;
        let raw = self.take(len, section)?;
        String::from_utf8(raw.to_vec()).map_err(|_| invalid(format!("{section} is not UTF-8")))
    }
}

pub fn read_template(bytes: &[u8]) -> Result<Template, TemplateError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(magic);
        return Err(TemplateError::BadMagic(found));
    }
    let version = cur.u8("header")?;
    if version != VERSION {
        return Err(TemplateError::UnsupportedVersion(version));
    }
    let flags = cur.u8("header")?;
    if flags & !(FLAG_EMBEDDING | FLAG_AGED) != 0 {
        return Err(invalid(format!("unknown flag bits {flags:#04x}")));
    }
    let ppi = cur.u16("header")?;
    let thumb_code = cur.u8("header")?;
    let thumb = Thumb::from_code(thumb_code).ok_or_else(|| invalid(format!("thumb code {thumb_code}")))?;
    let gender_code = cur.u8("header")?;
    let gender =
        Gender::from_code(gender_code).ok_or_else(|| invalid(format!("gender code {gender_code}")))?;
    let age = cur.u16("header")?;
    let subject_id = cur.string("subject id")?;
    let session_id = cur.string("session id")?;
    let count = cur.u16("minutiae count")? as usize;

    let block = cur.take(count * MINUTIA_LEN, "minutiae block")?;
    let minutiae = block
        .chunks_exact(MINUTIA_LEN)
        .map(|c| Minutia {
            x: dequantize_coord(u32::from_le_bytes([c[0], c[1], c[2], 0])),
            y: dequantize_coord(u32::from_le_bytes([c[3], c[4], c[5], 0])),
            theta: dequantize_angle(u16::from_le_bytes([c[6], c[7]])),
        })
        .collect();

    let embedding = if flags & FLAG_EMBEDDING != 0 {
        let raw = cur.take(4 * EMBEDDING_DIM, "embedding")?;
        Some(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    } else {
        None
    };

    let rest = bytes.len() - cur.pos;
    if rest != 0 {
        return Err(TemplateError::TrailingBytes(rest));
    }

    let t = Template {
        subject_id,
        thumb,
        session_id,
        age_weeks_at_capture: age as u32,
        gender,
        minutiae: MinutiaeSet {
            minutiae,
            source_ppi: ppi as u32,
        },
        embedding,
        aged: flags & FLAG_AGED != 0,
    };
    t.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn blank() -> Template {
        Template {
            subject_id: String::new(),
            thumb: Thumb::Left,
            session_id: String::new(),
            age_weeks_at_capture: 0,
            gender: Gender::Unknown,
            minutiae: MinutiaeSet::empty(1900),
            embedding: None,
            aged: false,
        }
    }

    #[test]
    fn empty_template_is_header_only() {
        let bytes = write_template(&blank()).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(&bytes[..4], b"IPTF");
        assert_eq!(read_template(&bytes).unwrap(), blank());
    }

    #[test]
    fn quantization_error_within_one_step() {
        let mut t = blank();
        t.minutiae.minutiae.push(Minutia::new(100.5, 200.25, PI).unwrap());
        t.minutiae.minutiae.push(Minutia::new(3.14159, 0.001, 6.283).unwrap());
        let back = read_template(&write_template(&t).unwrap()).unwrap();
        for (a, b) in t.minutiae.iter().zip(back.minutiae.iter()) {
            assert!((a.x - b.x).abs() <= 1.0 / 256.0);
            assert!((a.y - b.y).abs() <= 1.0 / 256.0);
            let d = (a.theta - b.theta).abs();
            assert!(d.min(TAU - d) <= TAU / 65536.0);
        }
        // grid values are exact
        assert_eq!(back.minutiae.minutiae[0], Minutia { x: 100.5, y: 200.25, theta: PI });
    }

    #[test]
    fn layout_is_little_endian() {
        let mut t = blank();
        t.subject_id = "s".into();
        t.minutiae.source_ppi = 0x0102;
        t.minutiae.minutiae.push(Minutia { x: 1.0, y: 2.0, theta: PI });
        let b = write_template(&t).unwrap();
        assert_eq!(&b[6..8], &[0x02, 0x01]);
        // x = 256 -> 00 01 00, y = 512 -> 00 02 00, theta = 32768 -> 00 80
        let m = &b[b.len() - 8..];
        assert_eq!(m, &[0x00, 0x01, 0x00, 0x00, 0x02, 0x00, 0x00, 0x80]);
    }

    #[test]
    fn distinct_decode_errors() {
        let mut t = blank();
        t.minutiae.minutiae.push(Minutia { x: 5.0, y: 5.0, theta: 0.0 });
        let good = write_template(&t).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_template(&bad), Err(TemplateError::BadMagic(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert_eq!(read_template(&bad), Err(TemplateError::UnsupportedVersion(2)));

        let cut = &good[..good.len() - 3];
        assert!(matches!(
            read_template(cut),
            Err(TemplateError::Truncated { section: "minutiae block", .. })
        ));

        let mut long = good.clone();
        long.push(0);
        assert_eq!(read_template(&long), Err(TemplateError::TrailingBytes(1)));

        let mut bad = good;
        bad[8] = 7;
        assert!(matches!(read_template(&bad), Err(TemplateError::Invalid(_))));
    }

    #[test]
    fn embedding_must_be_unit() {
        let mut t = blank();
        t.embedding = Some(vec![0.5; EMBEDDING_DIM]);
        assert!(matches!(write_template(&t), Err(TemplateError::Invalid(_))));

        let mut bytes = {
            let mut ok = blank();
            let mut e = vec![0.0f32; EMBEDDING_DIM];
            e[0] = 1.0;
            ok.embedding = Some(e);
            write_template(&ok).unwrap()
        };
        // corrupt the first embedding component to 2.0
        let off = bytes.len() - 4 * EMBEDDING_DIM;
        bytes[off..off + 4].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(read_template(&bytes), Err(TemplateError::Invalid(_))));
    }

    #[test]
    fn oversize_fields_rejected() {
        let mut t = blank();
        t.subject_id = "x".repeat(256);
        assert!(write_template(&t).is_err());
        let mut t = blank();
        t.minutiae.minutiae.push(Minutia { x: 70000.0, y: 0.0, theta: 0.0 });
        assert!(write_template(&t).is_err());
        let mut t = blank();
        t.age_weeks_at_capture = 1040;
        assert!(write_template(&t).is_err());
    }
}
