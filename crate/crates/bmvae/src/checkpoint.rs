//! Checkpoint files: the whole model state in one self-checking text file.
//!
//! Layout of `bmvae-checkpoint v1`:
//!
//! ```text
//! bmvae-checkpoint v1
//! sha256 <hex digest of everything after this line>
//! step <optimizer step count>
//! prior
//! <machine text block>
//! mlp encoder <layer count>
//! layer <out> <in> <activation>
//! weights <row-major values>
//! bias <values>
//! ...
//! mlp decoder <layer count> ...
//! head none            (or a third `mlp gaussian_head ...` block)
//! moments encoder <len>
//! m <values>
//! v <values>
//! ...                  (decoder, gaussian_head when present, prior)
//! ```
//!
//! Floats print in shortest round-trip decimal, so a load followed by a
//! save reproduces the file byte for byte. The digest makes silent
//! corruption loud: any flipped byte below the `sha256` line fails the
//! load with a checksum error rather than a subtly wrong model.

use crate::error::{Error, Result};
use crate::machine::BoltzmannMachine;
use crate::nn::{Activation, Layer, Matrix, MlpParams};
use crate::training::{ModelState, MomentPair, OptState};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

const VERSION_LINE: &str = "bmvae-checkpoint v1";

fn push_floats(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

fn push_mlp(out: &mut String, name: &str, mlp: &MlpParams) {
    writeln!(out, "mlp {name} {}", mlp.layers.len()).unwrap();
    for layer in &mlp.layers {
        writeln!(
            out,
            "layer {} {} {}",
            layer.output_dim(),
            layer.input_dim(),
            layer.activation.name()
        )
        .unwrap();
        push_floats(out, "weights", layer.weights.data());
        push_floats(out, "bias", &layer.bias);
    }
}

fn push_moments(out: &mut String, name: &str, pair: &MomentPair) {
    writeln!(out, "moments {name} {}", pair.m.len()).unwrap();
    push_floats(out, "m", &pair.m);
    push_floats(out, "v", &pair.v);
}

/// Serializes the full state, digest included.
pub fn to_text(state: &ModelState) -> String {
    let mut body = String::new();
    writeln!(body, "step {}", state.step_counter).unwrap();
    body.push_str("prior\n");
    body.push_str(&state.prior.to_text());
    push_mlp(&mut body, "encoder", &state.encoder);
    push_mlp(&mut body, "decoder", &state.decoder);
    match &state.gaussian_head {
        Some(head) => push_mlp(&mut body, "gaussian_head", head),
        None => body.push_str("head none\n"),
    }
    push_moments(&mut body, "encoder", &state.opt.encoder);
    push_moments(&mut body, "decoder", &state.opt.decoder);
    if let Some(pair) = &state.opt.gaussian_head {
        push_moments(&mut body, "gaussian_head", pair);
    }
    push_moments(&mut body, "prior", &state.opt.prior);

    let digest = Sha256::digest(body.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").unwrap();
    }
    format!("{VERSION_LINE}\nsha256 {hex}\n{body}")
}

/// Line-by-line reader that remembers byte offsets for error reports.
struct Cursor<'a> {
    text: &'a str,
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, offset: 0 }
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        if self.offset >= self.text.len() {
            return Err(Error::Format {
                offset: self.offset,
                message: format!("file ended while reading {what}"),
            });
        }
        let rest = &self.text[self.offset..];
        let at = self.offset;
        let (line, advance) = match rest.find('\n') {
            Some(pos) => (&rest[..pos], pos + 1),
            None => (rest, rest.len()),
        };
        self.offset += advance;
        Ok((at, line))
    }

    fn expect_tagged(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        let (at, line) = self.next(tag)?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(first) if first == tag => Ok((at, parts.collect())),
            _ => Err(Error::Format { offset: at, message: format!("expected a {tag:?} line, got {line:?}") }),
        }
    }
}

fn parse_at<T: std::str::FromStr>(field: Option<&str>, at: usize, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::Format { offset: at, message: format!("missing {what}") })?
        .parse()
        .map_err(|_| Error::Format { offset: at, message: format!("unreadable {what}") })
}

fn parse_floats(tokens: &[&str], at: usize, want: usize, what: &str) -> Result<Vec<f64>> {
    if tokens.len() != want {
        return Err(Error::Format {
            offset: at,
            message: format!("{what}: expected {want} values, found {}", tokens.len()),
        });
    }
    tokens.iter().map(|t| parse_at(Some(t), at, what)).collect()
}

fn parse_mlp(cursor: &mut Cursor, name: &str) -> Result<MlpParams> {
    let (at, fields) = cursor.expect_tagged("mlp")?;
    if fields.first() != Some(&name) {
        return Err(Error::Format {
            offset: at,
            message: format!("expected the {name} network, found {:?}", fields.first()),
        });
    }
    let layer_count: usize = parse_at(fields.get(1).copied(), at, "layer count")?;
    if layer_count == 0 {
        return Err(Error::Format { offset: at, message: format!("{name} has no layers") });
    }
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let (lat, lf) = cursor.expect_tagged("layer")?;
        let out_dim: usize = parse_at(lf.first().copied(), lat, "layer output size")?;
        let in_dim: usize = parse_at(lf.get(1).copied(), lat, "layer input size")?;
        let act_name = lf
            .get(2)
            .ok_or_else(|| Error::Format { offset: lat, message: "missing activation".into() })?;
        let activation = Activation::from_name(act_name)
            .map_err(|_| Error::Format { offset: lat, message: format!("unknown activation {act_name:?}") })?;
        let (wat, wtok) = cursor.expect_tagged("weights")?;
        let weights =
            Matrix::from_rows(out_dim, in_dim, parse_floats(&wtok, wat, out_dim * in_dim, "weights")?)?;
        let (bat, btok) = cursor.expect_tagged("bias")?;
        let bias = parse_floats(&btok, bat, out_dim, "bias")?;
        layers.push(Layer { weights, bias, activation });
    }
    Ok(MlpParams { layers })
}

fn parse_moments(cursor: &mut Cursor, name: &str) -> Result<MomentPair> {
    let (at, fields) = cursor.expect_tagged("moments")?;
    if fields.first() != Some(&name) {
        return Err(Error::Format {
            offset: at,
            message: format!("expected {name} moments, found {:?}", fields.first()),
        });
    }
    let len: usize = parse_at(fields.get(1).copied(), at, "moment length")?;
    let (mat, mtok) = cursor.expect_tagged("m")?;
    let m = parse_floats(&mtok, mat, len, "first moments")?;
    let (vat, vtok) = cursor.expect_tagged("v")?;
    let v = parse_floats(&vtok, vat, len, "second moments")?;
    Ok(MomentPair { m, v })
}

/// Parses and integrity-checks a checkpoint produced by [`to_text`].
pub fn from_text(text: &str) -> Result<ModelState> {
    let mut cursor = Cursor::new(text);
    let (_, version) = cursor.next("the version line")?;
    if version != VERSION_LINE {
        return Err(Error::VersionMismatch(format!(
            "checkpoint header {version:?}, this build reads {VERSION_LINE:?}"
        )));
    }
    let (sat, sfields) = cursor.expect_tagged("sha256")?;
    let stored = sfields
        .first()
        .ok_or_else(|| Error::Format { offset: sat, message: "missing digest".into() })?;
    let body = &text[cursor.offset..];
    let digest = Sha256::digest(body.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").unwrap();
    }
    if hex != *stored {
        return Err(Error::CorruptCheckpoint(format!(
            "checksum mismatch: stored {stored}, computed {hex}"
        )));
    }

    let (at, step_fields) = cursor.expect_tagged("step")?;
    let step_counter: u64 = parse_at(step_fields.first().copied(), at, "step count")?;

    cursor.expect_tagged("prior")?;
    let machine_start = cursor.offset;
    cursor.next("the machine header")?;
    let (_, spins_line) = cursor.next("the spin count")?;
    let _: usize = parse_at(spins_line.split_whitespace().nth(1), machine_start, "spin count")?;
    let (eat, edges_line) = cursor.next("the edge count")?;
    let edge_count: usize = parse_at(edges_line.split_whitespace().nth(1), eat, "edge count")?;
    for _ in 0..edge_count {
        cursor.next("an edge line")?;
    }
    let prior = BoltzmannMachine::from_text(&text[machine_start..cursor.offset])?;

    let encoder = parse_mlp(&mut cursor, "encoder")?;
    let decoder = parse_mlp(&mut cursor, "decoder")?;
    let (hat, head_line) = cursor.next("the head marker")?;
    let gaussian_head = match head_line.trim() {
        "head none" => None,
        _ => {
            // rewind and read the third network
            cursor.offset = hat;
            Some(parse_mlp(&mut cursor, "gaussian_head")?)
        }
    };

    let opt = OptState {
        encoder: parse_moments(&mut cursor, "encoder")?,
        decoder: parse_moments(&mut cursor, "decoder")?,
        gaussian_head: match &gaussian_head {
            Some(_) => Some(parse_moments(&mut cursor, "gaussian_head")?),
            None => None,
        },
        prior: parse_moments(&mut cursor, "prior")?,
    };

    let state = ModelState { encoder, decoder, prior, gaussian_head, step_counter, opt };
    validate(&state)?;
    Ok(state)
}

fn validate(state: &ModelState) -> Result<()> {
    let k = state.prior.num_spins();
    let mismatch = |msg: String| Err(Error::DimensionMismatch(msg));
    if state.encoder.output_dim() != k {
        return mismatch(format!("encoder emits {}, prior has {k} spins", state.encoder.output_dim()));
    }
    if state.decoder.input_dim() != k {
        return mismatch(format!("decoder reads {}, prior has {k} spins", state.decoder.input_dim()));
    }
    if state.decoder.output_dim() != state.encoder.input_dim() {
        return mismatch("decoder output does not match encoder input".into());
    }
    if let Some(head) = &state.gaussian_head {
        if head.input_dim() != state.encoder.input_dim() || head.output_dim() != k {
            return mismatch("log-variance head shape does not match the encoder".into());
        }
        if state.opt.gaussian_head.is_none() {
            return mismatch("log-variance head present without optimizer moments".into());
        }
    }
    let pairs: [(&str, &MomentPair, usize); 3] = [
        ("encoder", &state.opt.encoder, state.encoder.num_params()),
        ("decoder", &state.opt.decoder, state.decoder.num_params()),
        ("prior", &state.opt.prior, state.prior.couplings().len()),
    ];
    for (name, pair, want) in pairs {
        if pair.m.len() != want || pair.v.len() != want {
            return mismatch(format!("{name} moments hold {} values, parameters need {want}", pair.m.len()));
        }
    }
    if let (Some(head), Some(pair)) = (&state.gaussian_head, &state.opt.gaussian_head) {
        if pair.m.len() != head.num_params() || pair.v.len() != head.num_params() {
            return mismatch("log-variance head moments do not match its parameters".into());
        }
    }
    Ok(())
}

pub fn save(state: &ModelState, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(state))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelState> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::error::io_at(path, e))?;
    from_text(&text)
}
