//! JSON-lines traces with floats written at 17 significant digits, so a
//! reloaded trace reproduces every `f64` bit for bit.

use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::Result;

#[derive(Debug, Clone, Copy, Default)]
pub struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{value:.8e}")
    }
}

pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value.serialize(&mut ser)?;
    // serde_json only emits UTF-8
    Ok(String::from_utf8(buf).expect("serde_json output is UTF-8"))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        writeln!(out, "{}", to_json_line(item)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(input: R) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            items.push(serde_json::from_str(&line)?);
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn writes_seventeen_digits() {
        let s = to_json_line(&vec![0.1f64, -2.5e-300]).unwrap();
        assert_eq!(s, "[1.0000000000000001e-1,-2.5000000000000000e-300]");
    }

    proptest! {
        #[test]
        fn floats_reload_bit_exactly(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back: Vec<f64> = serde_json::from_str(&to_json_line(&vec![v]).unwrap()).unwrap();
            prop_assert_eq!(back[0].to_bits(), v.to_bits());
        }
    }
}
