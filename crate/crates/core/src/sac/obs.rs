use serde::{Deserialize, Serialize};

use crate::approx::{NetInput, NetSpec, Tensor};
use crate::error::{Error, Result};
use crate::simworld::{Grid, LabelGrid, Observation, Palette};

/// Observation as stored in replay and passed between nodes.
///
/// Label grids are kept 2-bit packed (1 KiB for 64×64), which is what makes a large
/// replay buffer of image observations fit in memory.
#[derive(Debug, Clone, PartialEq)]
pub enum Obs {
    Vector(Vec<f64>),
    Labels { packed: Vec<u8>, rows: u16, cols: u16, speed: f64 },
    Pixels { data: Vec<f32>, rows: u16, cols: u16, speed: f64 },
}

impl Obs {
    pub fn from_observation(o: &Observation) -> Self {
        match &o.grid {
            Grid::Labels(g) => Obs::Labels { packed: g.pack(), rows: g.rows as u16, cols: g.cols as u16, speed: o.speed },
            Grid::Pixels(p) => Obs::Pixels { data: p.data.clone(), rows: p.rows as u16, cols: p.cols as u16, speed: o.speed },
        }
    }

    pub fn labels(&self) -> Option<LabelGrid> {
        match self {
            Obs::Labels { packed, rows, cols, .. } => Some(LabelGrid::unpack(*rows as usize, *cols as usize, packed)),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Obs::Vector(v) => v.iter().all(|x| x.is_finite()),
            Obs::Labels { speed, .. } => speed.is_finite(),
            Obs::Pixels { data, speed, .. } => speed.is_finite() && data.iter().all(|x| x.is_finite()),
        }
    }
}

/// How stored observations become network input channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InputEncoding {
    Vector,
    /// One channel per semantic class.
    OneHot,
    /// Flat palette colours per class; texture noise is not applied here, so stored
    /// label grids decode to the same pixels every time.
    Palette { colors: [[f32; 3]; 3] },
}

impl InputEncoding {
    pub fn palette(p: &Palette) -> Self {
        InputEncoding::Palette { colors: p.colors }
    }

    pub fn encode(&self, spec: &NetSpec, obs: &[&Obs]) -> Result<NetInput> {
        let b = obs.len();
        match self {
            InputEncoding::Vector => {
                let mut aux = Vec::with_capacity(b * spec.aux_dim);
                for o in obs {
                    match o {
                        Obs::Vector(v) if v.len() == spec.aux_dim => aux.extend_from_slice(v),
                        _ => return Err(Error::Shape(format!("expected a vector observation of length {}", spec.aux_dim))),
                    }
                }
                Ok(NetInput { image: None, aux: Tensor::new(vec![b, spec.aux_dim], aux) })
            }
            InputEncoding::OneHot | InputEncoding::Palette { .. } => {
                let e = spec.encoder.as_ref().ok_or_else(|| Error::Shape("grid input needs an encoder".into()))?;
                if e.in_channels != 3 {
                    return Err(Error::Shape("grid encodings produce three channels".into()));
                }
                let plane = e.rows * e.cols;
                let mut img = vec![0.0; b * 3 * plane];
                let mut aux = Vec::with_capacity(b);
                for (n, o) in obs.iter().enumerate() {
                    let dst = &mut img[n * 3 * plane..(n + 1) * 3 * plane];
                    match (self, o) {
                        (_, Obs::Labels { packed, rows, cols, speed }) => {
                            if (*rows as usize, *cols as usize) != (e.rows, e.cols) {
                                return Err(Error::Shape(format!("grid {rows}x{cols}, network expects {}x{}", e.rows, e.cols)));
                            }
                            let g = LabelGrid::unpack(e.rows, e.cols, packed);
                            match self {
                                InputEncoding::OneHot => g.one_hot_into(dst),
                                InputEncoding::Palette { colors } => {
                                    for (i, &l) in g.raw().iter().enumerate() {
                                        for ch in 0..3 {
                                            dst[ch * plane + i] = colors[l as usize][ch] as f64;
                                        }
                                    }
                                }
                                InputEncoding::Vector => unreachable!(),
                            }
                            aux.push(*speed);
                        }
                        (InputEncoding::Palette { .. }, Obs::Pixels { data, rows, cols, speed }) => {
                            if (*rows as usize, *cols as usize) != (e.rows, e.cols) {
                                return Err(Error::Shape(format!("image {rows}x{cols}, network expects {}x{}", e.rows, e.cols)));
                            }
                            dst.iter_mut().zip(data).for_each(|(d, s)| *d = *s as f64);
                            aux.push(*speed);
                        }
                        _ => return Err(Error::Shape("observation kind does not match the input encoding".into())),
                    }
                }
                Ok(NetInput { image: Some(Tensor::new(vec![b, 3, e.rows, e.cols], img)), aux: Tensor::new(vec![b, 1], aux) })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::SemanticClass;

    #[test]
    fn palette_decoding_matches_appearance_renderer() {
        let mut g = LabelGrid::filled(64, 64, SemanticClass::Drivable);
        g.set(3, 4, SemanticClass::NonDrivable);
        g.set(10, 60, SemanticClass::Alternative);
        let o = Obs::from_observation(&Observation { grid: Grid::Labels(g.clone()), speed: 0.4 });
        let spec = crate::approx::NetSpec::compact_driving();
        let pal = Palette::coarse();
        let input = InputEncoding::palette(&pal).encode(&spec, &[&o]).unwrap();
        let mut rng = rand::rngs::mock::StepRng::new(0, 1);
        let px = crate::simworld::render_appearance(&g, &pal, &mut rng);
        let want: Vec<f64> = px.data.iter().map(|v| *v as f64).collect();
        assert_eq!(input.image.unwrap().data, want);
        assert_eq!(input.aux.data, vec![0.4]);
    }

    #[test]
    fn mismatched_kind_rejected() {
        let spec = crate::approx::NetSpec::mlp(2, 1, vec![4]);
        let o = Obs::Vector(vec![1.0]);
        assert!(InputEncoding::Vector.encode(&spec, &[&o]).is_err());
        assert!(InputEncoding::OneHot.encode(&spec, &[&o]).is_err());
    }
}
