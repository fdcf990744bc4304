//! Versioned plain-text checkpoints.
//!
//! ```text
//! cdfkan-checkpoint 1
//! variant CDFKAL_NET
//! layers 2
//! layer in=6 out=4 degree=3 norm=cdf residual=none output=linear
//! weights 4 16
//! <4 rows of 16 values>
//! ln frozen=false epsilon=0.00001
//! <scale row>
//! <shift row>
//! ...
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::fmt::{Display, Write as _};
use std::path::Path;

use ndarray::Array2;

use super::{InputNorm, KanError, KanLayer, Network, OutputStage, Residual, Variant};
use crate::basis::BasisSpec;
use crate::normalize::{LayerNormParams, MinMaxScope};
use crate::Scalar;

const MAGIC: &str = "cdfkan-checkpoint";
const VERSION: u32 = 1;

fn scope_name(scope: MinMaxScope) -> &'static str {
    match scope {
        MinMaxScope::PerFeature => "per-feature",
        MinMaxScope::WholeBatch => "whole-batch",
        MinMaxScope::PerSample => "per-sample",
    }
}

fn join<T: Display>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_matrix<S: Scalar>(out: &mut String, tag: &str, m: &Array2<S>) {
    writeln!(out, "{tag} {} {}", m.nrows(), m.ncols()).unwrap();
    for row in m.rows() {
        writeln!(out, "{}", join(row.iter())).unwrap();
    }
}

fn write_ln<S: Scalar>(out: &mut String, tag: &str, p: &LayerNormParams<S>) {
    writeln!(out, "{tag} frozen={} epsilon={}", p.frozen, p.epsilon).unwrap();
    writeln!(out, "{}", join(&p.scale)).unwrap();
    writeln!(out, "{}", join(&p.shift)).unwrap();
}

impl<S: Scalar> Network<S> {
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        match self.variant {
            Some(v) => writeln!(out, "variant {v}").unwrap(),
            None => out.push_str("variant custom\n"),
        }
        writeln!(out, "layers {}", self.layers.len()).unwrap();
        for l in &self.layers {
            let norm = match l.norm {
                InputNorm::Cdf => "cdf".to_string(),
                InputNorm::MinMax(s) => format!("minmax:{}", scope_name(s)),
            };
            let residual = match l.residual {
                Residual::None => "none",
                Residual::Silu => "silu",
                Residual::ProjectedSilu => "projected-silu",
            };
            let output = match l.output {
                OutputStage::Linear => "linear",
                OutputStage::NormSilu(_) => "norm-silu",
            };
            writeln!(
                out,
                "layer in={} out={} degree={} norm={norm} residual={residual} output={output}",
                l.in_dim,
                l.out_dim,
                l.degree()
            )
            .unwrap();
            write_matrix(&mut out, "weights", &l.weights);
            if let Some(r) = &l.residual_weights {
                write_matrix(&mut out, "residual_weights", r);
            }
            if let Some(ln) = &l.ln {
                write_ln(&mut out, "ln", ln);
            }
            if let OutputStage::NormSilu(p) = &l.output {
                write_ln(&mut out, "out_ln", p);
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, KanError> {
        let mut r = Reader::new(text);
        let header = r.line()?;
        if header != format!("{MAGIC} {VERSION}") {
            return Err(r.err(format!("unsupported header `{header}`")));
        }
        let variant = match r.keyed("variant")? {
            "custom" => None,
            name => Some(name.parse::<Variant>().map_err(|e| r.err(e.to_string()))?),
        };
        let layers_field = r.keyed("layers")?;
        let count: usize = r.parse(layers_field)?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            layers.push(r.layer()?);
        }
        if let Ok(extra) = r.line() {
            return Err(r.err(format!("trailing content `{extra}`")));
        }
        let mut net = Network::new(layers)?;
        net.variant = variant;
        Ok(net)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), KanError> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self, KanError> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line_no: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> KanError {
        KanError::Checkpoint {
            line: self.line_no,
            msg: msg.into(),
        }
    }

    fn line(&mut self) -> Result<&'a str, KanError> {
        let (i, l) = self.lines.next().ok_or_else(|| self.err("unexpected end of file"))?;
        self.line_no = i + 1;
        Ok(l.trim())
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str, KanError> {
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{key} …`, found `{line}`")))
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T, KanError> {
        s.parse().map_err(|_| self.err(format!("cannot parse `{s}`")))
    }

    fn fields(&self, line: &'a str) -> Result<Vec<(&'a str, &'a str)>, KanError> {
        line.split_whitespace()
            .map(|kv| kv.split_once('=').ok_or_else(|| self.err(format!("expected key=value, got `{kv}`"))))
            .collect()
    }

    fn field<'b>(&self, fields: &[(&'b str, &'b str)], key: &str) -> Result<&'b str, KanError> {
        fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| self.err(format!("missing `{key}`")))
    }

    fn row<S: Scalar>(&mut self, len: usize) -> Result<Vec<S>, KanError> {
        let line = self.line()?;
        let row = line
            .split_whitespace()
            .map(|v| self.parse::<S>(v))
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", row.len())));
        }
        Ok(row)
    }

    fn matrix<S: Scalar>(&mut self, tag: &str, shape: (usize, usize)) -> Result<Array2<S>, KanError> {
        let dims: Vec<usize> = self
            .keyed(tag)?
            .split_whitespace()
            .map(|v| self.parse(v))
            .collect::<Result<_, _>>()?;
        if dims != [shape.0, shape.1] {
            return Err(self.err(format!("{tag} shape {dims:?}, expected {shape:?}")));
        }
        let mut data = Vec::with_capacity(shape.0 * shape.1);
        for _ in 0..shape.0 {
            data.extend(self.row::<S>(shape.1)?);
        }
        Ok(Array2::from_shape_vec(shape, data).expect("row lengths checked"))
    }

    fn layer_norm<S: Scalar>(&mut self, tag: &str, dim: usize) -> Result<LayerNormParams<S>, KanError> {
        let head = self.keyed(tag)?;
        let fields = self.fields(head)?;
        let frozen = self.parse(self.field(&fields, "frozen")?)?;
        let epsilon = self.parse(self.field(&fields, "epsilon")?)?;
        let scale = self.row(dim)?;
        let shift = self.row(dim)?;
        Ok(LayerNormParams {
            scale,
            shift,
            frozen,
            epsilon,
        })
    }

    fn layer<S: Scalar>(&mut self) -> Result<KanLayer<S>, KanError> {
        let head = self.keyed("layer")?;
        let f = self.fields(head)?;
        let in_dim: usize = self.parse(self.field(&f, "in")?)?;
        let out_dim: usize = self.parse(self.field(&f, "out")?)?;
        let degree: usize = self.parse(self.field(&f, "degree")?)?;
        let norm = match self.field(&f, "norm")? {
            "cdf" => InputNorm::Cdf,
            "minmax:per-feature" => InputNorm::MinMax(MinMaxScope::PerFeature),
            "minmax:whole-batch" => InputNorm::MinMax(MinMaxScope::WholeBatch),
            "minmax:per-sample" => InputNorm::MinMax(MinMaxScope::PerSample),
            other => return Err(self.err(format!("unknown norm `{other}`"))),
        };
        let residual = match self.field(&f, "residual")? {
            "none" => Residual::None,
            "silu" => Residual::Silu,
            "projected-silu" => Residual::ProjectedSilu,
            other => return Err(self.err(format!("unknown residual `{other}`"))),
        };
        let norm_silu = match self.field(&f, "output")? {
            "linear" => false,
            "norm-silu" => true,
            other => return Err(self.err(format!("unknown output `{other}`"))),
        };
        let weights = self.matrix("weights", (out_dim, in_dim * (degree + 1)))?;
        let residual_weights = if residual == Residual::ProjectedSilu {
            Some(self.matrix("residual_weights", (out_dim, in_dim))?)
        } else {
            None
        };
        let ln = if norm == InputNorm::Cdf {
            Some(self.layer_norm("ln", in_dim)?)
        } else {
            None
        };
        let output = if norm_silu {
            OutputStage::NormSilu(self.layer_norm("out_ln", out_dim)?)
        } else {
            OutputStage::Linear
        };
        let layer = KanLayer {
            in_dim,
            out_dim,
            spec: BasisSpec::new(degree),
            weights,
            ln,
            norm,
            residual,
            residual_weights,
            output,
        };
        layer.validate()?;
        Ok(layer)
    }
}
