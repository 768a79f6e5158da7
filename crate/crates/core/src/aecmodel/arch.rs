use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which linear branches the autoencoder keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Linear branches in both encoder (through `Q`) and decoder (through `M`).
    Macu,
    /// Linear decoder branch only; the encoder is a plain MLP.
    Nfaec,
    /// No linear branches at all.
    Mfaec,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Macu, Variant::Nfaec, Variant::Mfaec];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Macu => "macu",
            Variant::Nfaec => "nfaec",
            Variant::Mfaec => "mfaec",
        }
    }

    pub fn linear_encoder(self) -> bool {
        self == Variant::Macu
    }

    pub fn linear_decoder(self) -> bool {
        self != Variant::Mfaec
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macu" => Ok(Variant::Macu),
            "nfaec" => Ok(Variant::Nfaec),
            "mfaec" => Ok(Variant::Mfaec),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

/// Layer widths of the two MLPs for `L` bands and `P` endmembers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub bands: usize,
    pub endmembers: usize,
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl Architecture {
    pub fn new(bands: usize, endmembers: usize) -> Result<Self> {
        let (l, p) = (bands, endmembers);
        if p < 2 || l <= p {
            return Err(Error::invalid(format!("network needs L > P >= 2, got L={l}, P={p}")));
        }
        Ok(Self {
            bands: l,
            endmembers: p,
            encoder: vec![l, 2 * l, l.div_ceil(2), l.div_ceil(4), 4 * p, p, p],
            decoder: vec![p * (l + 1), p * l, l, l, l],
        })
    }

    /// Width of the decoder MLP input: the abundances followed by vec(M).
    pub fn decoder_input(&self) -> usize {
        self.decoder[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_round_up() {
        let a = Architecture::new(10, 3).unwrap();
        assert_eq!(a.encoder, vec![10, 20, 5, 3, 12, 3, 3]);
        assert_eq!(a.decoder, vec![33, 30, 10, 10, 10]);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(Architecture::new(3, 3).is_err());
        assert!(Architecture::new(10, 1).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("macu2".parse::<Variant>().is_err());
    }
}
