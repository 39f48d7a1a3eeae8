//! Architecture strings.
//!
//! ```text
//! linear                 d → C
//! mlp[:d-h1-…-C]         affine layers with the activation between them
//! gcn[:d-h1-…-hk]        Kipf–Welling encoder, then a decoder to C classes
//! sage[:…] / mp[:…]      GraphSAGE / generic message-passing encoders
//! gat[:d-HxK-C]          K heads of width H, then one head to C classes
//! ```

use crate::error::{Error, Result};
use crate::gnn::{EncoderDecoder, EncoderLayer, MessagePassingLayer, MpVariant};
use crate::nn::{Activation, Model};

#[derive(Clone, Debug, PartialEq)]
pub enum Arch {
    /// `None` widths are filled in from the data and `hidden`.
    Dense { dims: Option<Vec<usize>>, hidden: Option<usize> },
    Mp { variant: MpVariant, dims: Option<Vec<usize>>, hidden: usize },
    Gat { dims: Option<[usize; 4]>, hidden: usize, heads: usize },
}

fn widths(s: &str, spec: &str) -> Result<Vec<usize>> {
    s.split('-')
        .map(|w| match w.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(Error::Config(format!("bad width '{w}' in architecture '{spec}'"))),
        })
        .collect()
}

fn no_override(flag: &str, given: Option<usize>, spec: &str) -> Result<()> {
    match given {
        Some(_) => Err(Error::Config(format!("--{flag} only applies to a bare architecture kind, not '{spec}'"))),
        None => Ok(()),
    }
}

pub fn parse_arch(spec: &str, hidden: Option<usize>, heads: Option<usize>) -> Result<Arch> {
    let (kind, rest) = match spec.split_once(':') {
        Some((k, r)) => (k, Some(r)),
        None => (spec, None),
    };
    if rest.is_some() {
        no_override("hidden", hidden, spec)?;
        no_override("heads", heads, spec)?;
    }
    if kind != "gat" {
        no_override("heads", heads, spec)?;
    }
    match kind {
        "linear" => {
            let dims = rest.map(|r| widths(r, spec)).transpose()?;
            if dims.as_ref().is_some_and(|d| d.len() != 2) {
                return Err(Error::Config(format!("'{spec}': linear takes exactly two widths")));
            }
            no_override("hidden", hidden, spec)?;
            Ok(Arch::Dense { dims, hidden: None })
        }
        "mlp" => {
            let dims = rest.map(|r| widths(r, spec)).transpose()?;
            if dims.as_ref().is_some_and(|d| d.len() < 2) {
                return Err(Error::Config(format!("'{spec}': mlp needs at least two widths")));
            }
            Ok(Arch::Dense {
                dims,
                hidden: Some(hidden.unwrap_or(500)),
            })
        }
        "gcn" | "sage" | "mp" => {
            let variant = kind.parse()?;
            let dims = rest.map(|r| widths(r, spec)).transpose()?;
            if dims.as_ref().is_some_and(|d| d.len() < 2) {
                return Err(Error::Config(format!("'{spec}': an encoder needs at least two widths")));
            }
            Ok(Arch::Mp {
                variant,
                dims,
                hidden: hidden.unwrap_or(4),
            })
        }
        "gat" => {
            let dims = match rest {
                None => None,
                Some(r) => {
                    let parts: Vec<&str> = r.split('-').collect();
                    let bad = || Error::Config(format!("'{spec}': expected gat:d-HxK-C"));
                    if parts.len() != 3 {
                        return Err(bad());
                    }
                    let (h, k) = parts[1].split_once('x').ok_or_else(bad)?;
                    let v = widths(&[parts[0], h, k, parts[2]].join("-"), spec)?;
                    Some([v[0], v[1], v[2], v[3]])
                }
            };
            Ok(Arch::Gat {
                dims,
                hidden: hidden.unwrap_or(8),
                heads: heads.unwrap_or(8),
            })
        }
        other => Err(Error::Config(format!("unknown architecture kind '{other}'"))),
    }
}

fn check_ends(first: usize, last: usize, d: usize, classes: usize, what: &str) -> Result<()> {
    if first != d {
        return Err(Error::Config(format!("{what} input width {first} but the data has {d} features")));
    }
    if last != classes {
        return Err(Error::Config(format!("{what} output width {last} but the data has {classes} classes")));
    }
    Ok(())
}

impl Arch {
    /// An MLP for `d`-dimensional samples in `classes` classes.
    pub fn build_dense(&self, d: usize, classes: usize, activation: Activation) -> Result<Model> {
        let Arch::Dense { dims, hidden } = self else {
            return Err(Error::Config("graph architectures need a graph dataset".into()));
        };
        let dims = match (dims, hidden) {
            (Some(v), _) => v.clone(),
            (None, Some(h)) => vec![d, *h, classes],
            (None, None) => vec![d, classes],
        };
        check_ends(dims[0], *dims.last().unwrap_or(&0), d, classes, "model")?;
        Model::mlp(&dims, activation)
    }

    /// A node classifier for `d` input features and `classes` classes.
    pub fn build_graph(
        &self,
        d: usize,
        classes: usize,
        activation: Activation,
        decoder: Option<&str>,
        self_loops: bool,
    ) -> Result<EncoderDecoder> {
        match self {
            Arch::Dense { .. } => Err(Error::Config("graph datasets need a gcn, sage, mp or gat architecture".into())),
            Arch::Gat { dims, hidden, heads } => {
                if decoder.is_some() {
                    return Err(Error::Config("a gat model ends in its own attention head; drop --decoder".into()));
                }
                let [i, h, k, c] = dims.unwrap_or([d, *hidden, *heads, classes]);
                check_ends(i, c, d, classes, "gat")?;
                EncoderDecoder::gat(i, h, k, c, activation, self_loops)
            }
            Arch::Mp { variant, dims, hidden } => {
                let dims = dims.clone().unwrap_or_else(|| vec![d, *hidden]);
                if dims[0] != d {
                    return Err(Error::Config(format!("encoder input width {} but the data has {d} features", dims[0])));
                }
                let last = *dims.last().unwrap_or(&0);
                let dec_dims = match decoder {
                    None => vec![last, classes],
                    Some(s) => match parse_arch(s, None, None)? {
                        Arch::Dense { dims: Some(v), .. } => v,
                        _ => return Err(Error::Config(format!("decoder '{s}' must be linear:a-C or mlp:a-…-C"))),
                    },
                };
                check_ends(dec_dims[0], *dec_dims.last().unwrap_or(&0), last, classes, "decoder")?;
                let encoder = dims
                    .windows(2)
                    .map(|w| EncoderLayer::Mp(MessagePassingLayer::zeros(*variant, w[0], w[1], activation)))
                    .collect();
                EncoderDecoder::new(encoder, Some(Model::mlp(&dec_dims, activation)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_reference_architectures() {
        assert_eq!(
            parse_arch("mlp:784-500-10", None, None).unwrap(),
            Arch::Dense {
                dims: Some(vec![784, 500, 10]),
                hidden: Some(500)
            }
        );
        assert!(matches!(parse_arch("gat:1433-8x8-7", None, None).unwrap(), Arch::Gat { dims: Some([1433, 8, 8, 7]), .. }));
        let gcn = parse_arch("gcn:34-4-4-2", None, None).unwrap();
        let m = gcn.build_graph(34, 4, Activation::Tanh, Some("linear:2-4"), false).unwrap();
        assert_eq!(m.encoder().len(), 3);
        assert_eq!(m.classes(), 4);
    }

    #[test]
    fn rejects_bad_strings() {
        for s in ["cnn:1-2", "mlp:784", "mlp:784-0-10", "gat:10-8-7", "linear:1-2-3"] {
            assert!(parse_arch(s, None, None).is_err(), "{s}");
        }
        assert!(parse_arch("mlp:784-500-10", Some(100), None).is_err());
        let a = parse_arch("mlp:784-500-10", None, None).unwrap();
        assert!(a.build_dense(785, 10, Activation::Relu).is_err());
        assert!(a.build_dense(784, 9, Activation::Relu).is_err());
    }

    #[test]
    fn bare_kinds_take_data_widths() {
        let m = parse_arch("mlp", Some(32), None).unwrap().build_dense(20, 3, Activation::Relu).unwrap();
        assert_eq!((m.in_len(), m.out_len(), m.layers().len()), (20, 3, 2));
        let g = parse_arch("gat", Some(4), Some(2)).unwrap().build_graph(10, 3, Activation::Elu, None, true).unwrap();
        assert_eq!((g.in_dim(), g.classes()), (10, 3));
    }
}
